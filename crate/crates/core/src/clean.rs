//! Type-directed cleaning of raw extracted strings.
//!
//! Bills are formatted for viewing: amounts carry units and Italian-style
//! separators (`1.000,00 €`), dates are written out as day month year.
//! Each GAT's output type selects the cleaning function; failures are
//! collected per value, never panics.
//!
//! Separator rules: `,` is always the decimal separator. A `.` is a
//! thousands separator when the digits after it form full 3-digit groups
//! (`1.000`, `12.345.678`); otherwise a single `.` is taken as an already
//! canonical decimal point, which makes cleaning idempotent on its own
//! output (`1000.00` stays `1000.00`).

use crate::extract::Observation;
use crate::mapping::{GatDefinition, MonthLocale, OutputType};
use crate::value::{CivilDate, CleanValue, Decimal2};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt;

/// Why a single raw value could not be cleaned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanFailure {
    pub reason: String,
}

impl CleanFailure {
    fn new(reason: impl Into<String>) -> Self {
        CleanFailure {
            reason: reason.into(),
        }
    }
}

impl fmt::Display for CleanFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.reason)
    }
}

/// A cleaning failure with enough context to find the offending value
/// again: the bill file, the GAT, and the raw text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CleanError {
    pub bill_id: String,
    pub gat: String,
    pub raw_value: String,
    pub reason: String,
}

impl fmt::Display for CleanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} / {}: {} (raw {:?})",
            self.bill_id, self.gat, self.reason, self.raw_value
        )
    }
}

impl std::error::Error for CleanError {}

const CURRENCY_SYMBOLS: [char; 4] = ['€', '$', '£', '¥'];

/// Strip at most one trailing unit token: a run of ASCII letters (`kWh`,
/// `EUR`) or a single currency symbol, optionally preceded by a space.
fn strip_unit(s: &str) -> &str {
    let t = s.trim_end();
    let stripped = if let Some(rest) = t.strip_suffix(CURRENCY_SYMBOLS) {
        rest
    } else {
        let letters = t.chars().rev().take_while(|c| c.is_ascii_alphabetic()).count();
        if letters == 0 {
            return t;
        }
        let cut = t
            .char_indices()
            .rev()
            .nth(letters - 1)
            .map(|(i, _)| i)
            .unwrap_or(0);
        &t[..cut]
    };
    stripped.trim_end()
}

fn split_sign(s: &str) -> (i64, &str) {
    match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, s),
    }
}

fn all_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Remove `.` thousands separators from a digits-and-dots string, checking
/// that every group after the first has exactly 3 digits.
fn strip_thousands(s: &str) -> Option<String> {
    let groups: Vec<&str> = s.split('.').collect();
    if !all_digits(groups[0]) {
        return None;
    }
    for g in &groups[1..] {
        if g.len() != 3 || !all_digits(g) {
            return None;
        }
    }
    Some(groups.concat())
}

fn digits_to_i64(digits: &str, context: &str) -> Result<i64, CleanFailure> {
    if digits.len() > 18 {
        return Err(CleanFailure::new(format!("{context} out of range")));
    }
    digits
        .parse::<i64>()
        .map_err(|_| CleanFailure::new(format!("{context} out of range")))
}

/// Clean a display-formatted amount into a fixed-point value, rounding
/// half-up (away from zero) to 2 fractional digits.
pub fn clean_decimal(raw: &str) -> Result<Decimal2, CleanFailure> {
    let s = strip_unit(raw.trim());
    let (sign, s) = split_sign(s);
    if s.is_empty() {
        return Err(CleanFailure::new("unparseable decimal: no digits"));
    }
    if s.bytes().any(|b| !b.is_ascii_digit() && b != b'.' && b != b',') {
        return Err(CleanFailure::new("unparseable decimal: residual non-numeric characters"));
    }

    let commas = s.bytes().filter(|b| *b == b',').count();
    let (int_digits, frac_digits) = match commas {
        0 => match s.bytes().filter(|b| *b == b'.').count() {
            0 => (s.to_string(), String::new()),
            1 => {
                let (a, b) = s.split_once('.').expect("one dot");
                // A lone dot followed by exactly 3 digits is a thousands
                // separator; anything else is a decimal point.
                if !a.is_empty() && all_digits(a) && b.len() == 3 && all_digits(b) {
                    (format!("{a}{b}"), String::new())
                } else if all_digits(b) && (a.is_empty() || all_digits(a)) {
                    (if a.is_empty() { "0".into() } else { a.to_string() }, b.to_string())
                } else {
                    return Err(CleanFailure::new("unparseable decimal"));
                }
            }
            _ => (
                strip_thousands(s)
                    .ok_or_else(|| CleanFailure::new("unparseable decimal: bad digit grouping"))?,
                String::new(),
            ),
        },
        1 => {
            let (int_part, frac_part) = s.split_once(',').expect("one comma");
            if !all_digits(frac_part) {
                return Err(CleanFailure::new("unparseable decimal: bad fractional part"));
            }
            let int_digits = if int_part.is_empty() {
                "0".to_string()
            } else if int_part.contains('.') {
                strip_thousands(int_part)
                    .ok_or_else(|| CleanFailure::new("unparseable decimal: bad digit grouping"))?
            } else if all_digits(int_part) {
                int_part.to_string()
            } else {
                return Err(CleanFailure::new("unparseable decimal"));
            };
            (int_digits, frac_part.to_string())
        }
        _ => return Err(CleanFailure::new("unparseable decimal: more than one comma")),
    };

    if !all_digits(&int_digits) {
        return Err(CleanFailure::new("unparseable decimal"));
    }
    let int = digits_to_i64(&int_digits, "decimal")?;
    let frac_bytes = frac_digits.as_bytes();
    let d0 = frac_bytes.first().map_or(0, |b| (b - b'0') as i64);
    let d1 = frac_bytes.get(1).map_or(0, |b| (b - b'0') as i64);
    let round_up = frac_bytes.get(2).is_some_and(|b| *b >= b'5');
    let minor = int
        .checked_mul(100)
        .and_then(|v| v.checked_add(d0 * 10 + d1))
        .and_then(|v| v.checked_add(i64::from(round_up)))
        .ok_or_else(|| CleanFailure::new("decimal out of range"))?;
    Ok(Decimal2(sign * minor))
}

/// Clean a whole-number field: unit stripped, optional sign, optional `.`
/// thousands separators. Any fractional part is an error.
pub fn clean_integer(raw: &str) -> Result<i64, CleanFailure> {
    let s = strip_unit(raw.trim());
    let (sign, s) = split_sign(s);
    if s.is_empty() {
        return Err(CleanFailure::new("unparseable integer: no digits"));
    }
    if s.contains(',') {
        return Err(CleanFailure::new("unparseable integer: fractional part present"));
    }
    if s.bytes().any(|b| !b.is_ascii_digit() && b != b'.') {
        return Err(CleanFailure::new("unparseable integer: residual non-numeric characters"));
    }
    let digits = if s.contains('.') {
        strip_thousands(s)
            .ok_or_else(|| CleanFailure::new("unparseable integer: bad digit grouping"))?
    } else {
        s.to_string()
    };
    Ok(sign * digits_to_i64(&digits, "integer")?)
}

const ENGLISH_MONTHS: [&str; 12] = [
    "january", "february", "march", "april", "may", "june", "july", "august", "september",
    "october", "november", "december",
];

const ITALIAN_MONTHS: [&str; 12] = [
    "gennaio", "febbraio", "marzo", "aprile", "maggio", "giugno", "luglio", "agosto",
    "settembre", "ottobre", "novembre", "dicembre",
];

pub fn month_names(locale: MonthLocale) -> &'static [&'static str; 12] {
    match locale {
        MonthLocale::English => &ENGLISH_MONTHS,
        MonthLocale::Italian => &ITALIAN_MONTHS,
    }
}

/// Parse a `day month-name year` date (e.g. `10 January 2021`), month names
/// matched case-insensitively against the locale table.
pub fn clean_date(raw: &str, locale: MonthLocale) -> Result<CivilDate, CleanFailure> {
    let tokens: Vec<&str> = raw.split_whitespace().collect();
    let [day_text, month_text, year_text] = tokens.as_slice() else {
        return Err(CleanFailure::new("expected `day month year`"));
    };
    let day: u8 = all_digits(day_text)
        .then(|| day_text.parse().ok())
        .flatten()
        .ok_or_else(|| CleanFailure::new(format!("non-numeric day {day_text:?}")))?;
    let year: i32 = all_digits(year_text)
        .then(|| year_text.parse().ok())
        .flatten()
        .ok_or_else(|| CleanFailure::new(format!("non-numeric year {year_text:?}")))?;
    let lowered = month_text.to_lowercase();
    let month = month_names(locale)
        .iter()
        .position(|m| *m == lowered)
        .map(|i| i as u8 + 1)
        .ok_or_else(|| CleanFailure::new(format!("unknown month name {month_text:?}")))?;
    CivilDate::new(year, month, day)
        .ok_or_else(|| CleanFailure::new(format!("day out of range: {raw:?}")))
}

/// Deterministic pseudonymization: lowercase hex SHA-256 of `salt ‖ value`.
/// Equal inputs under the same salt always map to the same digest.
pub fn hash_value(raw: &str, salt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(salt.as_bytes());
    hasher.update(raw.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(digest.len() * 2);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Clean one observation according to its GAT's output type. Null raw
/// values pass through as null; failures carry bill/GAT context.
pub fn clean_observation(
    obs: &Observation,
    gat: &GatDefinition,
    salt: &str,
    locale: MonthLocale,
) -> Result<CleanValue, CleanError> {
    debug_assert_eq!(obs.gat, gat.name);
    let Some(raw) = obs.raw_value.as_deref() else {
        return Ok(CleanValue::Null);
    };
    let cleaned = match gat.output_type {
        OutputType::Decimal => clean_decimal(raw).map(CleanValue::Decimal),
        OutputType::Integer => clean_integer(raw).map(CleanValue::Integer),
        OutputType::Date => clean_date(raw, locale).map(CleanValue::Date),
        OutputType::Text => Ok(CleanValue::Text(raw.to_string())),
        OutputType::HashedText => Ok(CleanValue::HashedText(hash_value(raw.trim(), salt))),
    };
    cleaned.map_err(|failure| CleanError {
        bill_id: obs.bill_id.clone(),
        gat: obs.gat.clone(),
        raw_value: raw.to_string(),
        reason: failure.reason,
    })
}
