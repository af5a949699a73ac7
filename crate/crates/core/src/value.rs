//! Typed cleaned values and their canonical text forms.
//!
//! Every stage boundary (cleaned long file, entity tables, ground-truth
//! dumps) renders values through this module, so canonical text is defined
//! exactly once: decimals with a `.` and two digits, dates as ISO-8601,
//! null as the empty string.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Fixed-point amount with two fractional digits, stored as minor units.
///
/// Billing amounts never touch binary floating point: `1.10 - 1.00` must be
/// exactly `0.10` in comparisons and CSV round-trips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Decimal2(pub i64);

impl Decimal2 {
    pub fn from_minor(minor: i64) -> Self {
        Decimal2(minor)
    }

    pub fn minor(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Decimal2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{}{}.{:02}", sign, abs / 100, abs % 100)
    }
}

/// Calendar date without timezone; bill dates are civil dates.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct CivilDate {
    pub year: i32,
    pub month: u8,
    pub day: u8,
}

impl CivilDate {
    /// Returns `None` when the day does not exist in the given month.
    pub fn new(year: i32, month: u8, day: u8) -> Option<Self> {
        if !(1..=9999).contains(&year) || !(1..=12).contains(&month) {
            return None;
        }
        if day == 0 || day > days_in_month(year, month) {
            return None;
        }
        Some(CivilDate { year, month, day })
    }
}

impl fmt::Display for CivilDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

pub fn is_leap_year(year: i32) -> bool {
    year % 4 == 0 && (year % 100 != 0 || year % 400 == 0)
}

pub fn days_in_month(year: i32, month: u8) -> u8 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            if is_leap_year(year) {
                29
            } else {
                28
            }
        }
        _ => 0,
    }
}

/// A cleaned, typed value. `Null` marks absence after extraction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CleanValue {
    Decimal(Decimal2),
    Integer(i64),
    Date(CivilDate),
    Text(String),
    HashedText(String),
    Null,
}

impl CleanValue {
    pub fn is_null(&self) -> bool {
        matches!(self, CleanValue::Null)
    }

    /// Tag used in the `type` column of the cleaned long-format file.
    pub fn tag(&self) -> &'static str {
        match self {
            CleanValue::Decimal(_) => "decimal",
            CleanValue::Integer(_) => "integer",
            CleanValue::Date(_) => "date",
            CleanValue::Text(_) => "text",
            CleanValue::HashedText(_) => "hashed_text",
            CleanValue::Null => "null",
        }
    }

    /// Canonical text form; null renders as the empty string.
    pub fn render(&self) -> String {
        match self {
            CleanValue::Decimal(d) => d.to_string(),
            CleanValue::Integer(i) => i.to_string(),
            CleanValue::Date(d) => d.to_string(),
            CleanValue::Text(s) | CleanValue::HashedText(s) => s.clone(),
            CleanValue::Null => String::new(),
        }
    }

    /// Strict inverse of [`CleanValue::render`] given the tag; rejects
    /// anything that the renderer would not have produced.
    pub fn parse_canonical(tag: &str, text: &str) -> Result<CleanValue, String> {
        match tag {
            "null" => {
                if text.is_empty() {
                    Ok(CleanValue::Null)
                } else {
                    Err(format!("null value with non-empty payload {text:?}"))
                }
            }
            "decimal" => parse_canonical_decimal(text).map(CleanValue::Decimal),
            "integer" => text
                .parse::<i64>()
                .map(CleanValue::Integer)
                .map_err(|e| format!("bad canonical integer {text:?}: {e}")),
            "date" => parse_canonical_date(text).map(CleanValue::Date),
            "text" => Ok(CleanValue::Text(text.to_string())),
            "hashed_text" => Ok(CleanValue::HashedText(text.to_string())),
            other => Err(format!("unknown value tag {other:?}")),
        }
    }
}

pub fn parse_canonical_decimal(text: &str) -> Result<Decimal2, String> {
    let (sign, rest) = match text.strip_prefix('-') {
        Some(r) => (-1i64, r),
        None => (1i64, text),
    };
    let (int_part, frac_part) = rest
        .split_once('.')
        .ok_or_else(|| format!("bad canonical decimal {text:?}"))?;
    if int_part.is_empty()
        || frac_part.len() != 2
        || !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(format!("bad canonical decimal {text:?}"));
    }
    let int: i64 = int_part
        .parse()
        .map_err(|_| format!("decimal out of range {text:?}"))?;
    let frac: i64 = frac_part.parse().unwrap();
    int.checked_mul(100)
        .and_then(|v| v.checked_add(frac))
        .map(|v| Decimal2(sign * v))
        .ok_or_else(|| format!("decimal out of range {text:?}"))
}

pub fn parse_canonical_date(text: &str) -> Result<CivilDate, String> {
    let bytes = text.as_bytes();
    if bytes.len() != 10 || bytes[4] != b'-' || bytes[7] != b'-' {
        return Err(format!("bad canonical date {text:?}"));
    }
    let year: i32 = text[0..4]
        .parse()
        .map_err(|_| format!("bad canonical date {text:?}"))?;
    let month: u8 = text[5..7]
        .parse()
        .map_err(|_| format!("bad canonical date {text:?}"))?;
    let day: u8 = text[8..10]
        .parse()
        .map_err(|_| format!("bad canonical date {text:?}"))?;
    CivilDate::new(year, month, day).ok_or_else(|| format!("invalid calendar date {text:?}"))
}
