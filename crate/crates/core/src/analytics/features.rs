//! Per-(POD, offer) feature vectors with churn labels.
//!
//! One vector per (POD, offer) pair occurring in the bills. Numeric bill
//! fields are summed across the pair's bills; user and POD attributes ride
//! along, with the year of birth turned back into an age at the corpus's
//! latest bill date. The churn label is 1 exactly when the vector's offer
//! differs from the offer in the POD's last bill.

use crate::fuse::{EntityTables, QuarantineEntry};
use crate::mapping::{Entity, MappingSpec, OutputType, Role};
use crate::value::{CivilDate, CleanValue, Decimal2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("mapping has no offer-role GAT; churn features need one")]
    NoOfferGat,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("column lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("column has zero variance; correlation undefined")]
    ZeroVariance,
    #[error("stratified {k}-fold needs every class at least {k} times; class {class} has {count}")]
    StratifiedFoldTooSmall { class: u8, count: usize, k: usize },
    #[error("gradient descent did not converge within {iters} iterations (final loss {loss})")]
    NonConvergence { iters: usize, loss: f64 },
    #[error("invalid parameter: {0}")]
    BadParams(String),
}

/// How a feature column is derived and rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Lexicographic ordinal code of a text attribute.
    Categorical,
    /// Years between the fused year of birth and the corpus reference date.
    Age,
    /// Entity-level integer attribute taken as-is.
    IntegerValue,
    /// Entity-level decimal attribute taken as-is.
    DecimalValue,
    /// Sum of an integer bill field over the pair's bills.
    IntegerSum,
    /// Sum of a decimal bill field over the pair's bills.
    DecimalSum,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: ColumnKind,
}

/// Exact cell value; models see `f64`, files see the canonical rendering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureCell {
    Int(i64),
    Dec(Decimal2),
}

impl FeatureCell {
    pub fn to_f64(self) -> f64 {
        match self {
            FeatureCell::Int(i) => i as f64,
            FeatureCell::Dec(d) => d.to_f64(),
        }
    }

    pub fn render(self) -> String {
        match self {
            FeatureCell::Int(i) => i.to_string(),
            FeatureCell::Dec(d) => d.to_string(),
        }
    }
}

/// One per-(POD, offer) row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureRow {
    pub pod_id: String,
    pub offer_code: i64,
    pub values: Vec<FeatureCell>,
    pub churn: u8,
}

/// The whole feature table: column schema plus rows sorted by
/// (pod_id, offer code).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FeatureSet {
    pub columns: Vec<FeatureColumn>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureSet {
    /// Column-major model matrix (feature columns only) and labels.
    pub fn matrix(&self) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut cols = vec![Vec::with_capacity(self.rows.len()); self.columns.len()];
        let mut labels = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            for (c, cell) in row.values.iter().enumerate() {
                cols[c].push(cell.to_f64());
            }
            labels.push(row.churn);
        }
        (cols, labels)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.churn).collect()
    }

    /// Row subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> FeatureSet {
        FeatureSet {
            columns: self.columns.clone(),
            rows: indices.iter().map(|i| self.rows[*i].clone()).collect(),
        }
    }
}

/// Category string → ordinal code, stable and injective.
pub type EncodingTable = BTreeMap<String, i64>;
/// Column name → its encoding table.
pub type EncodingTables = BTreeMap<String, EncodingTable>;

/// Ordinal encoding: codes 0..k-1 assigned in lexicographic order of the
/// distinct category strings.
pub fn encode_categorical(values: &[String]) -> (Vec<i64>, EncodingTable) {
    let mut table = EncodingTable::new();
    for v in values {
        table.entry(v.clone()).or_insert(0);
    }
    for (code, slot) in table.values_mut().enumerate() {
        *slot = code as i64;
    }
    let codes = values.iter().map(|v| table[v]).collect();
    (codes, table)
}

/// Derive the feature schema from the mapping: user attributes, then POD
/// attributes, then numeric bill fields, each in mapping order.
///
/// Identifiers and hashed pseudonyms never become features; the age-role
/// column is reported as an age, text attributes as categorical codes,
/// numeric bill attributes as per-pair sums.
pub fn feature_schema(spec: &MappingSpec) -> Vec<FeatureColumn> {
    let mut columns = Vec::new();
    for entity in [Entity::User, Entity::Pod] {
        for gat in spec.gats.iter().filter(|g| g.entity == entity) {
            if gat.role == Role::Identifier || gat.output_type == OutputType::HashedText {
                continue;
            }
            let kind = match (gat.role, gat.output_type) {
                (Role::Age, _) => ColumnKind::Age,
                (_, OutputType::Text) => ColumnKind::Categorical,
                (_, OutputType::Integer) => ColumnKind::IntegerValue,
                (_, OutputType::Decimal) => ColumnKind::DecimalValue,
                // dates carry no obvious numeric meaning as features
                (_, OutputType::Date) => continue,
                (_, OutputType::HashedText) => unreachable!(),
            };
            columns.push(FeatureColumn {
                name: gat.name.clone(),
                kind,
            });
        }
    }
    for gat in spec.gats.iter().filter(|g| g.entity == Entity::Bill) {
        if gat.role != Role::Attribute {
            continue;
        }
        let kind = match gat.output_type {
            OutputType::Integer => ColumnKind::IntegerSum,
            OutputType::Decimal => ColumnKind::DecimalSum,
            _ => continue,
        };
        columns.push(FeatureColumn {
            name: gat.name.clone(),
            kind,
        });
    }
    columns
}

/// Churn label for one (POD, offer) pair given the POD's bills: 1 iff the
/// offer in the last bill (date ties broken by greatest bill id) differs.
pub fn label_churn(bills: &[(CivilDate, &str, &str)], offer: &str) -> u8 {
    let last = bills
        .iter()
        .max_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)))
        .expect("label_churn needs at least one bill");
    u8::from(last.2 != offer)
}

pub struct FeatureBuild {
    pub set: FeatureSet,
    pub encodings: EncodingTables,
    pub ledger: Vec<QuarantineEntry>,
}

/// Build the per-(POD, offer) vectors from the fused tables.
pub fn build_feature_vectors(
    tables: &EntityTables,
    spec: &MappingSpec,
) -> Result<FeatureBuild, AnalyticsError> {
    let offer_gat = spec.offer_gat().ok_or(AnalyticsError::NoOfferGat)?;
    let bill_date_gat = spec.bill_date_gat();
    let columns = feature_schema(spec);

    let col_index = |name: &str, cols: &[String]| cols.iter().position(|c| c == name);
    let offer_idx = col_index(&offer_gat.name, &tables.bill_columns).expect("offer is a bill column");
    let date_idx =
        col_index(&bill_date_gat.name, &tables.bill_columns).expect("bill_date is a bill column");

    let pods: BTreeMap<&str, &crate::fuse::PodRow> =
        tables.pods.iter().map(|p| (p.pod_id.as_str(), p)).collect();
    let users: BTreeMap<&str, &crate::fuse::UserRow> =
        tables.users.iter().map(|u| (u.user_id.as_str(), u)).collect();

    // Reference date for ages: the latest bill date in the corpus.
    let reference_year = tables
        .bills
        .iter()
        .filter_map(|b| match &b.values[date_idx] {
            CleanValue::Date(d) => Some(*d),
            _ => None,
        })
        .max()
        .map(|d| d.year as i64);

    let mut ledger = Vec::new();
    let mut by_pod: BTreeMap<&str, Vec<&crate::fuse::BillRow>> = BTreeMap::new();
    for bill in &tables.bills {
        by_pod.entry(bill.pod_id.as_str()).or_default().push(bill);
    }

    // First pass: raw per-row data with category strings; codes need the
    // full corpus before they can be assigned.
    struct RawRow {
        pod_id: String,
        offer: String,
        cells: Vec<RawCell>,
        churn: u8,
    }
    enum RawCell {
        Category(String),
        Value(FeatureCell),
    }

    let mut raw_rows = Vec::new();
    for (pod_id, bills) in &by_pod {
        let mut dated: Vec<(CivilDate, &str, String)> = Vec::new();
        for bill in bills {
            let offer = match &bill.values[offer_idx] {
                CleanValue::Null => {
                    ledger.push(QuarantineEntry {
                        key: bill.bill_id.clone(),
                        reason: "null offer; excluded from feature vectors".into(),
                    });
                    continue;
                }
                v => v.render(),
            };
            let CleanValue::Date(date) = bill.values[date_idx] else {
                unreachable!("fused bills carry a date");
            };
            dated.push((date, bill.bill_id.as_str(), offer));
        }
        if dated.is_empty() {
            ledger.push(QuarantineEntry {
                key: format!("pod:{pod_id}"),
                reason: "no bills with a non-null offer".into(),
            });
            continue;
        }
        let dated_refs: Vec<(CivilDate, &str, &str)> =
            dated.iter().map(|(d, b, o)| (*d, *b, o.as_str())).collect();

        let pod = pods.get(pod_id).expect("referential integrity");
        let user = users.get(pod.user_id.as_str()).expect("referential integrity");

        let mut offers: Vec<&str> = dated_refs.iter().map(|d| d.2).collect();
        offers.sort_unstable();
        offers.dedup();

        for offer in offers {
            let pair_bills: Vec<&&crate::fuse::BillRow> = bills
                .iter()
                .filter(|b| match &b.values[offer_idx] {
                    CleanValue::Null => false,
                    v => v.render() == offer,
                })
                .collect();
            let churn = label_churn(&dated_refs, offer);

            let mut cells = Vec::with_capacity(columns.len());
            for column in &columns {
                let cell = match column.kind {
                    ColumnKind::Age => {
                        let age = match (user.year_of_birth, reference_year) {
                            (Some(yob), Some(ref_year)) => ref_year - yob,
                            _ => {
                                ledger.push(QuarantineEntry {
                                    key: format!("user:{}", pod.user_id),
                                    reason: "null year of birth; age feature set to 0".into(),
                                });
                                0
                            }
                        };
                        RawCell::Value(FeatureCell::Int(age))
                    }
                    ColumnKind::Categorical | ColumnKind::IntegerValue | ColumnKind::DecimalValue => {
                        let value = entity_value(&column.name, pod, user, tables);
                        match column.kind {
                            ColumnKind::Categorical => RawCell::Category(value.render()),
                            _ => RawCell::Value(match value {
                                CleanValue::Integer(i) => FeatureCell::Int(*i),
                                CleanValue::Decimal(d) => FeatureCell::Dec(*d),
                                _ => FeatureCell::Int(0),
                            }),
                        }
                    }
                    ColumnKind::IntegerSum | ColumnKind::DecimalSum => {
                        let idx = col_index(&column.name, &tables.bill_columns)
                            .expect("aggregate column is a bill column");
                        let mut int_sum = 0i64;
                        for b in &pair_bills {
                            match &b.values[idx] {
                                CleanValue::Integer(i) => int_sum += i,
                                CleanValue::Decimal(d) => int_sum += d.minor(),
                                _ => {}
                            }
                        }
                        match column.kind {
                            ColumnKind::IntegerSum => RawCell::Value(FeatureCell::Int(int_sum)),
                            _ => RawCell::Value(FeatureCell::Dec(Decimal2(int_sum))),
                        }
                    }
                };
                cells.push(cell);
            }
            raw_rows.push(RawRow {
                pod_id: pod_id.to_string(),
                offer: offer.to_string(),
                cells,
                churn,
            });
        }
    }

    // Assign ordinal codes from the full value sets.
    let mut encodings = EncodingTables::new();
    let offer_values: Vec<String> = raw_rows.iter().map(|r| r.offer.clone()).collect();
    let (offer_codes, offer_table) = encode_categorical(&offer_values);
    encodings.insert(offer_gat.name.clone(), offer_table);

    for (c, column) in columns.iter().enumerate() {
        if column.kind != ColumnKind::Categorical {
            continue;
        }
        let values: Vec<String> = raw_rows
            .iter()
            .map(|r| match &r.cells[c] {
                RawCell::Category(s) => s.clone(),
                RawCell::Value(_) => unreachable!(),
            })
            .collect();
        let (_, table) = encode_categorical(&values);
        encodings.insert(column.name.clone(), table);
    }

    let mut rows: Vec<FeatureRow> = raw_rows
        .iter()
        .zip(offer_codes)
        .map(|(raw, offer_code)| FeatureRow {
            pod_id: raw.pod_id.clone(),
            offer_code,
            values: raw
                .cells
                .iter()
                .enumerate()
                .map(|(c, cell)| match cell {
                    RawCell::Category(s) => FeatureCell::Int(encodings[&columns[c].name][s]),
                    RawCell::Value(v) => *v,
                })
                .collect(),
            churn: raw.churn,
        })
        .collect();
    rows.sort_by(|a, b| (&a.pod_id, a.offer_code).cmp(&(&b.pod_id, b.offer_code)));

    Ok(FeatureBuild {
        set: FeatureSet { columns, rows },
        encodings,
        ledger,
    })
}

/// Look up a named column on the pod or user row that owns it.
fn entity_value<'a>(
    name: &str,
    pod: &'a crate::fuse::PodRow,
    user: &'a crate::fuse::UserRow,
    tables: &EntityTables,
) -> &'a CleanValue {
    if let Some(i) = tables.pod_columns.iter().position(|c| c == name) {
        return &pod.values[i];
    }
    if let Some(i) = tables.user_columns.iter().position(|c| c == name) {
        return &user.values[i];
    }
    unreachable!("feature column {name:?} is neither a pod nor a user column")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u8, day: u8) -> CivilDate {
        CivilDate::new(y, m, day).unwrap()
    }

    #[test]
    fn churn_is_one_unless_offer_matches_last_bill() {
        let bills = vec![
            (d(2021, 1, 1), "b1", "A"),
            (d(2021, 3, 1), "b2", "A"),
            (d(2021, 5, 1), "b3", "B"),
        ];
        assert_eq!(label_churn(&bills, "A"), 1);
        assert_eq!(label_churn(&bills, "B"), 0);
    }

    #[test]
    fn churn_single_offer_pod_is_zero() {
        let bills = vec![(d(2021, 1, 1), "b1", "A")];
        assert_eq!(label_churn(&bills, "A"), 0);
    }

    #[test]
    fn churn_date_tie_breaks_by_greatest_bill_id() {
        let bills = vec![(d(2021, 1, 1), "m/a.json", "A"), (d(2021, 1, 1), "m/b.json", "B")];
        assert_eq!(label_churn(&bills, "B"), 0);
        assert_eq!(label_churn(&bills, "A"), 1);
    }

    #[test]
    fn encoding_is_lexicographic() {
        let (codes, table) = encode_categorical(&["b".into(), "a".into(), "b".into()]);
        assert_eq!(codes, vec![1, 0, 1]);
        assert_eq!(table["a"], 0);
        assert_eq!(table["b"], 1);

        let (codes, table) = encode_categorical(&["x".into()]);
        assert_eq!(codes, vec![0]);
        assert_eq!(table.len(), 1);

        let (codes, table) = encode_categorical(&[]);
        assert!(codes.is_empty());
        assert!(table.is_empty());
    }
}
