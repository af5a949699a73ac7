//! Deterministic synthetic bill corpus with exact ground truth.
//!
//! Writes display-formatted JSON bills into `YYYY-MM/` month folders —
//! amounts like `1.234,56 €`, dates like `10 January 2021` — so the
//! cleaning stage is genuinely exercised, and independently computes the
//! tables, feature vectors, and churn labels the pipeline must reproduce
//! byte for byte. The ground-truth values are derived straight from the
//! generator's internal entity model, never by running the pipeline.

use crate::analytics::{ColumnKind, EncodingTables, FeatureCell, FeatureColumn, FeatureRow, FeatureSet};
use crate::clean::hash_value;
use crate::fuse::{BillRow, EntityTables, PodRow, UserRow};
use crate::mapping::{parse_mapping_file, MappingSpec, MonthLocale};
use crate::rng::{derive_seed, Rng};
use crate::value::{CivilDate, CleanValue, Decimal2};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Knobs of the generator. All probabilities are per-unit fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub users: usize,
    pub pods_per_user_min: usize,
    pub pods_per_user_max: usize,
    pub start_year: i32,
    pub start_month: u8,
    pub months_span: usize,
    /// A bill every this many months (bimonthly by default).
    pub bill_cadence_months: usize,
    /// Target fraction of (POD, offer) vectors labeled churn = 1.
    pub churn_prevalence: f64,
    /// Per-bill probability that the sex field is omitted.
    pub inconsistency_probability: f64,
    /// Mean billed-days reduction on bills of churned pairs (the injected
    /// negative dependence).
    pub days_churn_penalty: f64,
    pub days_sd: f64,
    pub month_locale: MonthLocale,
    pub salt: String,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 50,
            pods_per_user_min: 1,
            pods_per_user_max: 3,
            start_year: 2021,
            start_month: 1,
            months_span: 6,
            bill_cadence_months: 2,
            churn_prevalence: 0.018,
            inconsistency_probability: 0.15,
            days_churn_penalty: 17.0,
            days_sd: 8.0,
            month_locale: MonthLocale::English,
            salt: "synth".into(),
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::BadConfig(m.into()));
        if self.users == 0 {
            return bad("users must be >= 1");
        }
        if self.pods_per_user_min == 0 || self.pods_per_user_min > self.pods_per_user_max {
            return bad("pods_per_user range must satisfy 1 <= min <= max");
        }
        if self.months_span == 0 {
            return bad("months_span must be >= 1");
        }
        if self.bill_cadence_months == 0 || self.bill_cadence_months > self.months_span {
            return bad("bill_cadence_months must be in 1..=months_span");
        }
        if !(1..=12).contains(&self.start_month) {
            return bad("start_month must be 1..=12");
        }
        for (name, p) in [
            ("churn_prevalence", self.churn_prevalence),
            ("inconsistency_probability", self.inconsistency_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::BadConfig(format!("{name} must be in [0, 1]")));
            }
        }
        if self.days_sd <= 0.0 || !self.days_sd.is_finite() {
            return bad("days_sd must be positive");
        }
        if self.days_churn_penalty < 0.0 || !self.days_churn_penalty.is_finite() {
            return bad("days_churn_penalty must be >= 0");
        }
        Ok(())
    }
}

/// What the pipeline must reproduce exactly.
pub struct GroundTruth {
    pub tables: EntityTables,
    pub features: FeatureSet,
    pub encodings: EncodingTables,
    pub bill_count: usize,
}

const DEFAULT_MAPPING: &str = "\
name;paths;output_type;entity;role
# bill fields
bill_date;invoice.issue_date;date;bill;bill_date
offer;invoice.offer.name|invoice.offer.label;text;bill;offer
total_consumption;invoice.consumption.total;decimal;bill;attribute
total_amount;invoice.summary.total;decimal;bill;attribute
total_light_amount;invoice.summary.lines[*].light_amount;decimal;bill;attribute
billed_days;invoice.period.billed_days;integer;bill;attribute
# POD fields
pod_id;delivery.pod.code;text;pod;identifier
municipality;delivery.site.municipality;text;pod;attribute
# user fields
user_id;customer.profile.code;text;user;identifier
sex;customer.profile.sex;text;user;attribute
age;customer.profile.age;integer;user;age
user_ref;customer.profile.reference;hashed_text;user;attribute
";

/// The mapping matching the generated JSON shape: nested sections for the
/// user, the POD and the invoice, one array (the invoice lines) reached by
/// a wildcard, and a fallback pair for the offer key.
pub fn default_mapping_spec() -> MappingSpec {
    parse_mapping_file(DEFAULT_MAPPING).expect("builtin mapping is valid")
}

pub fn default_mapping_text() -> &'static str {
    DEFAULT_MAPPING
}

const OFFERS: [&str; 8] = [
    "base_casa",
    "easy_luce",
    "flex_web",
    "green_home",
    "notte_giorno",
    "prezzo_fisso",
    "smart_60",
    "tutto_compreso",
];

const MUNICIPALITIES: [&str; 12] = [
    "Bologna",
    "Carpi",
    "Ferrara",
    "Fiorano",
    "Formigine",
    "Imola",
    "Maranello",
    "Modena",
    "Parma",
    "Reggio Emilia",
    "Sassuolo",
    "Vignola",
];

struct UserModel {
    code: String,
    reference: String,
    sex: &'static str,
    birth_year: i64,
}

struct PodModel {
    code: String,
    user: usize,
    municipality: &'static str,
}

struct BillModel {
    bill_id: String,
    folder: String,
    file_name: String,
    pod: usize,
    date: CivilDate,
    offer: &'static str,
    consumption_minor: i64,
    total_minor: i64,
    light_minor: i64,
    fees_minor: i64,
    billed_days: i64,
    sex_omitted: bool,
    offer_key_is_label: bool,
    light_line_position: usize,
    line_count: usize,
}

fn month_at(config: &SynthConfig, offset: usize) -> (i32, u8) {
    let total = (config.start_month as usize - 1) + offset;
    (
        config.start_year + (total / 12) as i32,
        (total % 12) as u8 + 1,
    )
}

/// Italian display form of a fixed-point amount: dots every three digits,
/// comma before the two decimals.
fn display_amount(minor: i64) -> String {
    let sign = if minor < 0 { "-" } else { "" };
    let abs = minor.unsigned_abs();
    let digits = (abs / 100).to_string();
    let mut grouped = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            grouped.push('.');
        }
        grouped.push(ch);
    }
    format!("{sign}{grouped},{:02}", abs % 100)
}

fn display_date(date: CivilDate, locale: MonthLocale) -> String {
    let name = crate::clean::month_names(locale)[date.month as usize - 1];
    let name = match locale {
        // English month names are conventionally capitalized in bills
        MonthLocale::English => {
            let mut c = name.chars();
            c.next()
                .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
                .unwrap_or_default()
        }
        MonthLocale::Italian => name.to_string(),
    };
    format!("{} {} {}", date.day, name, date.year)
}

fn build_model(config: &SynthConfig) -> (Vec<UserModel>, Vec<PodModel>, Vec<BillModel>) {
    let mut rng = Rng::new(derive_seed(config.seed, 0x5EED));
    let switch_odds = if config.churn_prevalence >= 1.0 {
        1.0
    } else {
        config.churn_prevalence / (1.0 - config.churn_prevalence)
    };

    let mut users = Vec::with_capacity(config.users);
    let mut pods = Vec::new();
    let mut bills = Vec::new();
    let mut bill_seq = 0usize;

    for u in 0..config.users {
        users.push(UserModel {
            code: hash_value(&format!("user-{u:06}"), &config.salt),
            reference: format!("REF-{u:06}"),
            sex: if rng.bernoulli(0.5) { "F" } else { "M" },
            birth_year: 1935 + rng.next_below(66) as i64,
        });
        let pod_count = rng.range_i64(
            config.pods_per_user_min as i64,
            config.pods_per_user_max as i64,
        ) as usize;
        for _ in 0..pod_count {
            let pod_index = pods.len();
            pods.push(PodModel {
                code: format!("IT001E{:08}", pod_index + 1),
                user: u,
                municipality: MUNICIPALITIES[rng.next_below(MUNICIPALITIES.len() as u64) as usize],
            });

            let offset = rng.next_below(config.bill_cadence_months as u64) as usize;
            let mut month_offsets = Vec::new();
            let mut m = offset;
            while m < config.months_span {
                month_offsets.push(m);
                m += config.bill_cadence_months;
            }
            debug_assert!(!month_offsets.is_empty());

            let first_offer = OFFERS[rng.next_below(OFFERS.len() as u64) as usize];
            let n = month_offsets.len();
            let (switch_at, final_offer) = if n >= 2 && rng.bernoulli(switch_odds) {
                let at = 1 + rng.next_below(n as u64 - 1) as usize;
                let mut alt = rng.next_below(OFFERS.len() as u64 - 1) as usize;
                let first_idx = OFFERS.iter().position(|o| *o == first_offer).unwrap();
                if alt >= first_idx {
                    alt += 1;
                }
                (Some(at), OFFERS[alt])
            } else {
                (None, first_offer)
            };

            for (k, &offset) in month_offsets.iter().enumerate() {
                let (year, month) = month_at(config, offset);
                let day = 1 + rng.next_below(28) as u8;
                let date = CivilDate::new(year, month, day).expect("generated date is valid");
                let offer = match switch_at {
                    Some(at) if k >= at => final_offer,
                    _ => first_offer,
                };
                let is_churn_bill = offer != final_offer;
                let mean = 62.0 - if is_churn_bill { config.days_churn_penalty } else { 0.0 };
                let billed_days = (mean + config.days_sd * rng.next_gauss())
                    .round()
                    .clamp(15.0, 120.0) as i64;

                // minor units: 50.00..=600.00 kWh, 30.00..=200.00 light,
                // 5.00..=60.00 fees
                let consumption_minor = 5000 + rng.next_below(55001) as i64;
                let light_minor = 3000 + rng.next_below(17001) as i64;
                let fees_minor = 500 + rng.next_below(5501) as i64;
                let folder = format!("{year:04}-{month:02}");
                let file_name = format!("bill_{bill_seq:07}.json");
                bills.push(BillModel {
                    bill_id: format!("{folder}/{file_name}"),
                    folder,
                    file_name,
                    pod: pod_index,
                    date,
                    offer,
                    consumption_minor,
                    total_minor: light_minor + fees_minor,
                    light_minor,
                    fees_minor,
                    billed_days,
                    sex_omitted: rng.bernoulli(config.inconsistency_probability),
                    offer_key_is_label: rng.bernoulli(0.5),
                    light_line_position: rng.next_below(2) as usize,
                    line_count: 2 + rng.next_below(2) as usize,
                });
                bill_seq += 1;
            }
        }
    }

    // The fused sex must be recoverable: keep at least one bill per user
    // with the field present.
    let mut last_per_user: BTreeMap<usize, usize> = BTreeMap::new();
    let mut all_omitted: BTreeMap<usize, bool> = BTreeMap::new();
    for (i, bill) in bills.iter().enumerate() {
        let user = pods[bill.pod].user;
        let entry = all_omitted.entry(user).or_insert(true);
        *entry &= bill.sex_omitted;
        let best = last_per_user.entry(user).or_insert(i);
        let current = (&bills[*best].date, &bills[*best].bill_id);
        if (&bill.date, &bill.bill_id) > current {
            *best = i;
        }
    }
    for (user, omitted) in all_omitted {
        if omitted {
            let fix = last_per_user[&user];
            bills[fix].sex_omitted = false;
        }
    }

    (users, pods, bills)
}

fn bill_json(
    bill: &BillModel,
    pod: &PodModel,
    user: &UserModel,
    config: &SynthConfig,
) -> Value {
    let mut profile = serde_json::Map::new();
    profile.insert("code".into(), json!(user.code));
    if !bill.sex_omitted {
        profile.insert("sex".into(), json!(user.sex));
    }
    profile.insert(
        "age".into(),
        json!(bill.date.year as i64 - user.birth_year),
    );
    profile.insert("reference".into(), json!(user.reference));

    let light_line = json!({
        "kind": "light",
        "light_amount": format!("{} €", display_amount(bill.light_minor)),
    });
    let fee_line = json!({
        "kind": "fees",
        "amount": format!("{} €", display_amount(bill.fees_minor)),
    });
    let tax_line = json!({
        "kind": "taxes",
        "amount": "0,00 €",
    });
    let mut lines = vec![fee_line];
    if bill.line_count > 2 {
        lines.push(tax_line);
    }
    let at = bill.light_line_position.min(lines.len());
    lines.insert(at, light_line);

    let offer_key = if bill.offer_key_is_label { "label" } else { "name" };
    json!({
        "customer": { "profile": Value::Object(profile) },
        "delivery": {
            "pod": { "code": pod.code },
            "site": { "municipality": pod.municipality },
        },
        "invoice": {
            "issue_date": display_date(bill.date, config.month_locale),
            "offer": { offer_key: bill.offer },
            "summary": {
                "total": format!("{} €", display_amount(bill.total_minor)),
                "lines": lines,
            },
            "consumption": { "total": format!("{} kWh", display_amount(bill.consumption_minor)) },
            "period": { "billed_days": bill.billed_days },
        },
    })
}

fn ground_truth(
    users: &[UserModel],
    pods: &[PodModel],
    bills: &[BillModel],
    config: &SynthConfig,
) -> GroundTruth {
    // --- entity tables ------------------------------------------------
    let mut bill_rows: Vec<BillRow> = bills
        .iter()
        .map(|b| BillRow {
            bill_id: b.bill_id.clone(),
            pod_id: pods[b.pod].code.clone(),
            values: vec![
                CleanValue::Date(b.date),
                CleanValue::Text(b.offer.to_string()),
                CleanValue::Decimal(Decimal2(b.consumption_minor)),
                CleanValue::Decimal(Decimal2(b.total_minor)),
                CleanValue::Decimal(Decimal2(b.light_minor)),
                CleanValue::Integer(b.billed_days),
            ],
        })
        .collect();
    bill_rows.sort_by(|a, b| a.bill_id.cmp(&b.bill_id));

    let mut pod_rows: Vec<PodRow> = pods
        .iter()
        .map(|p| PodRow {
            pod_id: p.code.clone(),
            user_id: users[p.user].code.clone(),
            values: vec![CleanValue::Text(p.municipality.to_string())],
        })
        .collect();
    pod_rows.sort_by(|a, b| a.pod_id.cmp(&b.pod_id));

    // Users with every sex field omitted would fuse to null; the generator
    // guarantees that never happens, so the fused sex is the true sex.
    let mut user_rows: Vec<UserRow> = users
        .iter()
        .map(|u| UserRow {
            user_id: u.code.clone(),
            year_of_birth: Some(u.birth_year),
            values: vec![
                CleanValue::Text(u.sex.to_string()),
                CleanValue::HashedText(hash_value(&u.reference, &config.salt)),
            ],
        })
        .collect();
    user_rows.sort_by(|a, b| a.user_id.cmp(&b.user_id));

    let tables = EntityTables {
        bill_columns: vec![
            "bill_date".into(),
            "offer".into(),
            "total_consumption".into(),
            "total_amount".into(),
            "total_light_amount".into(),
            "billed_days".into(),
        ],
        pod_columns: vec!["municipality".into()],
        user_columns: vec!["sex".into(), "user_ref".into()],
        bills: bill_rows,
        pods: pod_rows,
        users: user_rows,
    };

    // --- encodings ----------------------------------------------------
    let encode = |mut values: Vec<String>| -> BTreeMap<String, i64> {
        values.sort();
        values.dedup();
        values
            .into_iter()
            .enumerate()
            .map(|(code, v)| (v, code as i64))
            .collect()
    };
    let offer_table = encode(bills.iter().map(|b| b.offer.to_string()).collect());
    let sex_table = encode(users.iter().map(|u| u.sex.to_string()).collect());
    let municipality_table = encode(pods.iter().map(|p| p.municipality.to_string()).collect());
    let mut encodings = EncodingTables::new();
    encodings.insert("offer".into(), offer_table.clone());
    encodings.insert("sex".into(), sex_table.clone());
    encodings.insert("municipality".into(), municipality_table.clone());

    // --- feature vectors ------------------------------------------------
    let reference_year = bills.iter().map(|b| b.date.year).max().unwrap_or(config.start_year) as i64;
    let mut per_pod: BTreeMap<usize, Vec<&BillModel>> = BTreeMap::new();
    for bill in bills {
        per_pod.entry(bill.pod).or_default().push(bill);
    }

    let mut rows = Vec::new();
    for (pod_index, pod_bills) in per_pod {
        let pod = &pods[pod_index];
        let user = &users[pod.user];
        let last = pod_bills
            .iter()
            .max_by(|a, b| (a.date, &a.bill_id).cmp(&(b.date, &b.bill_id)))
            .expect("every pod has bills");
        let mut offers: Vec<&str> = pod_bills.iter().map(|b| b.offer).collect();
        offers.sort_unstable();
        offers.dedup();
        for offer in offers {
            let pair: Vec<&&BillModel> = pod_bills.iter().filter(|b| b.offer == offer).collect();
            let sum = |f: fn(&BillModel) -> i64| pair.iter().map(|b| f(b)).sum::<i64>();
            rows.push(FeatureRow {
                pod_id: pod.code.clone(),
                offer_code: offer_table[offer],
                values: vec![
                    FeatureCell::Int(sex_table[user.sex]),
                    FeatureCell::Int(reference_year - user.birth_year),
                    FeatureCell::Int(municipality_table[pod.municipality]),
                    FeatureCell::Dec(Decimal2(sum(|b| b.consumption_minor))),
                    FeatureCell::Dec(Decimal2(sum(|b| b.total_minor))),
                    FeatureCell::Dec(Decimal2(sum(|b| b.light_minor))),
                    FeatureCell::Int(sum(|b| b.billed_days)),
                ],
                churn: u8::from(offer != last.offer),
            });
        }
    }
    rows.sort_by(|a, b| (&a.pod_id, a.offer_code).cmp(&(&b.pod_id, b.offer_code)));

    let features = FeatureSet {
        columns: vec![
            FeatureColumn { name: "sex".into(), kind: ColumnKind::Categorical },
            FeatureColumn { name: "age".into(), kind: ColumnKind::Age },
            FeatureColumn { name: "municipality".into(), kind: ColumnKind::Categorical },
            FeatureColumn { name: "total_consumption".into(), kind: ColumnKind::DecimalSum },
            FeatureColumn { name: "total_amount".into(), kind: ColumnKind::DecimalSum },
            FeatureColumn { name: "total_light_amount".into(), kind: ColumnKind::DecimalSum },
            FeatureColumn { name: "billed_days".into(), kind: ColumnKind::IntegerSum },
        ],
        rows,
    };

    GroundTruth {
        bill_count: bills.len(),
        tables,
        features,
        encodings,
    }
}

/// Generate the corpus under `corpus_dir` and return the ground truth.
/// Byte-identical output for equal configs.
pub fn generate_corpus(config: &SynthConfig, corpus_dir: &Path) -> Result<GroundTruth, SynthError> {
    config.validate()?;
    let (users, pods, bills) = build_model(config);

    let io_err = |path: &Path, source: std::io::Error| SynthError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut made_dirs: std::collections::BTreeSet<&str> = std::collections::BTreeSet::new();
    for bill in &bills {
        let dir = corpus_dir.join(&bill.folder);
        if made_dirs.insert(&bill.folder) {
            std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        let path = dir.join(&bill.file_name);
        let document = bill_json(bill, &pods[bill.pod], &users[pods[bill.pod].user], config);
        let mut text = serde_json::to_string_pretty(&document).expect("JSON value serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    }

    Ok(ground_truth(&users, &pods, &bills, config))
}

/// Write the ground-truth tables and features in the pipeline's own file
/// formats under `dir`.
pub fn write_truth(truth: &GroundTruth, dir: &Path) -> Result<(), crate::csvio::IoFormatError> {
    std::fs::create_dir_all(dir).map_err(|e| crate::csvio::IoFormatError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    crate::csvio::write_tables(dir, &truth.tables)?;
    crate::csvio::write_features(&dir.join("features.csv"), &truth.features)?;
    crate::csvio::write_encodings(&dir.join("encodings.json"), &truth.encodings)?;
    Ok(())
}

/// Parameters for the direct vector-set generator used in model-level
/// experiments: no corpus, just labeled vectors with one weak injected
/// signal (churned pairs get fewer billed days).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VectorSetConfig {
    pub vectors: usize,
    pub churn_prevalence: f64,
    pub days_churn_penalty: f64,
    pub days_sd: f64,
    pub seed: u64,
}

impl Default for VectorSetConfig {
    fn default() -> Self {
        VectorSetConfig {
            vectors: 100_000,
            churn_prevalence: 0.018,
            days_churn_penalty: 17.0,
            days_sd: 8.0,
            seed: 7,
        }
    }
}

/// Generate standalone feature vectors with the default schema. All
/// features are independent noise except billed_days, which carries the
/// injected negative churn dependence.
pub fn generate_vector_set(config: &VectorSetConfig) -> FeatureSet {
    let mut rng = Rng::new(derive_seed(config.seed, 0x7EC7));
    let columns = vec![
        FeatureColumn { name: "sex".into(), kind: ColumnKind::Categorical },
        FeatureColumn { name: "age".into(), kind: ColumnKind::Age },
        FeatureColumn { name: "municipality".into(), kind: ColumnKind::Categorical },
        FeatureColumn { name: "total_consumption".into(), kind: ColumnKind::DecimalSum },
        FeatureColumn { name: "total_amount".into(), kind: ColumnKind::DecimalSum },
        FeatureColumn { name: "total_light_amount".into(), kind: ColumnKind::DecimalSum },
        FeatureColumn { name: "billed_days".into(), kind: ColumnKind::IntegerSum },
    ];
    let rows = (0..config.vectors)
        .map(|i| {
            let churn = u8::from(rng.bernoulli(config.churn_prevalence));
            let mean = 62.0 - if churn == 1 { config.days_churn_penalty } else { 0.0 };
            let days = (mean + config.days_sd * rng.next_gauss())
                .round()
                .clamp(1.0, 150.0) as i64;
            FeatureRow {
                pod_id: format!("P{i:07}"),
                offer_code: rng.next_below(8) as i64,
                values: vec![
                    FeatureCell::Int(rng.next_below(2) as i64),
                    FeatureCell::Int(rng.range_i64(18, 92)),
                    FeatureCell::Int(rng.next_below(12) as i64),
                    FeatureCell::Dec(Decimal2(5_000 + rng.next_below(55_001) as i64)),
                    FeatureCell::Dec(Decimal2(3_500 + rng.next_below(22_501) as i64)),
                    FeatureCell::Dec(Decimal2(3_000 + rng.next_below(17_001) as i64)),
                    FeatureCell::Int(days),
                ],
                churn,
            }
        })
        .collect();
    FeatureSet { columns, rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_mapping_is_valid_and_complete() {
        let spec = default_mapping_spec();
        assert_eq!(spec.gats.len(), 12);
        assert_eq!(spec.bill_date_gat().name, "bill_date");
        assert_eq!(spec.offer_gat().unwrap().name, "offer");
        assert_eq!(spec.age_gat().unwrap().name, "age");
        // the feature schema it induces matches the canonical field list
        let names: Vec<String> = crate::analytics::feature_schema(&spec)
            .into_iter()
            .map(|c| c.name)
            .collect();
        assert_eq!(
            names,
            [
                "sex",
                "age",
                "municipality",
                "total_consumption",
                "total_amount",
                "total_light_amount",
                "billed_days"
            ]
        );
    }

    #[test]
    fn removing_the_bill_date_row_invalidates_the_mapping() {
        let without: String = DEFAULT_MAPPING
            .lines()
            .filter(|l| !l.starts_with("bill_date"))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(parse_mapping_file(&without).is_err());
    }

    #[test]
    fn display_formatting_matches_billing_conventions() {
        assert_eq!(display_amount(100000), "1.000,00");
        assert_eq!(display_amount(123456789), "1.234.567,89");
        assert_eq!(display_amount(5), "0,05");
        assert_eq!(display_amount(-1234567), "-12.345,67");
        assert_eq!(
            display_date(CivilDate::new(2021, 1, 10).unwrap(), MonthLocale::English),
            "10 January 2021"
        );
        assert_eq!(
            display_date(CivilDate::new(2021, 1, 10).unwrap(), MonthLocale::Italian),
            "10 gennaio 2021"
        );
    }

    #[test]
    fn minimal_corpus_has_one_file_and_one_row_per_table() {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig {
            users: 1,
            pods_per_user_min: 1,
            pods_per_user_max: 1,
            months_span: 1,
            bill_cadence_months: 1,
            ..Default::default()
        };
        let truth = generate_corpus(&config, dir.path()).unwrap();
        assert_eq!(truth.bill_count, 1);
        assert_eq!(truth.tables.bills.len(), 1);
        assert_eq!(truth.tables.pods.len(), 1);
        assert_eq!(truth.tables.users.len(), 1);
        assert_eq!(truth.features.rows.len(), 1);
        assert_eq!(truth.features.rows[0].churn, 0);
        let files: Vec<_> = walkdir::WalkDir::new(dir.path())
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file())
            .collect();
        assert_eq!(files.len(), 1);
    }

    #[test]
    fn equal_seeds_give_identical_corpora() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let config = SynthConfig {
            users: 8,
            ..Default::default()
        };
        generate_corpus(&config, a.path()).unwrap();
        generate_corpus(&config, b.path()).unwrap();

        let collect = |root: &Path| -> Vec<(String, String)> {
            let mut files: Vec<(String, String)> = walkdir::WalkDir::new(root)
                .into_iter()
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().is_file())
                .map(|e| {
                    (
                        e.path().strip_prefix(root).unwrap().display().to_string(),
                        std::fs::read_to_string(e.path()).unwrap(),
                    )
                })
                .collect();
            files.sort();
            files
        };
        assert_eq!(collect(a.path()), collect(b.path()));
    }

    #[test]
    fn generated_prevalence_tracks_the_knob() {
        // ~10^4 PODs
        let config = SynthConfig {
            users: 6700,
            pods_per_user_min: 1,
            pods_per_user_max: 2,
            churn_prevalence: 0.018,
            seed: 1,
            ..Default::default()
        };
        // model only; no files needed
        let (users, pods, bills) = build_model(&config);
        let truth = ground_truth(&users, &pods, &bills, &config);
        let positives = truth
            .features
            .rows
            .iter()
            .filter(|r| r.churn == 1)
            .count() as f64;
        let fraction = positives / truth.features.rows.len() as f64;
        assert!(
            (fraction - 0.018).abs() <= 0.004,
            "positive fraction {fraction}"
        );
    }

    #[test]
    fn vector_set_has_requested_size_and_signal_direction() {
        let set = generate_vector_set(&VectorSetConfig {
            vectors: 20_000,
            ..Default::default()
        });
        assert_eq!(set.rows.len(), 20_000);
        let report = crate::analytics::correlation_report(&set).unwrap();
        let days = report.iter().find(|e| e.feature == "billed_days").unwrap();
        assert!(days.r.unwrap() < 0.0);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let no_users = SynthConfig {
            users: 0,
            ..Default::default()
        };
        assert!(no_users.validate().is_err());
        let sparse_cadence = SynthConfig {
            bill_cadence_months: 9,
            months_span: 6,
            ..Default::default()
        };
        assert!(sparse_cadence.validate().is_err());
        let bad_prevalence = SynthConfig {
            churn_prevalence: 1.5,
            ..Default::default()
        };
        assert!(bad_prevalence.validate().is_err());
    }
}
