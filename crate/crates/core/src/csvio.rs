//! Stage-boundary file formats.
//!
//! Every format is written through exactly one function here and read back
//! through its strict counterpart, so "byte-identical outputs" is a property
//! of the writers, not of each call site. CSV files are RFC-4180 (quotes
//! only where needed, `\n` terminators); nulls are empty fields; rows
//! arrive pre-sorted by their stage.

use crate::analytics::{ColumnKind, CorrelationEntry, EncodingTables, FeatureCell, FeatureRow, FeatureSet};
use crate::clean::CleanError;
use crate::extract::Observation;
use crate::fuse::{BillRow, CleanedRow, EntityTables, PodRow, QuarantineEntry, UserRow};
use crate::mapping::MappingSpec;
use crate::value::CleanValue;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoFormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path} line {line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> IoFormatError {
    IoFormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, source: csv::Error) -> IoFormatError {
    IoFormatError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, line: usize, message: impl Into<String>) -> IoFormatError {
    IoFormatError::Format {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>, IoFormatError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>, IoFormatError> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

// ---------------------------------------------------------------- long CSV

pub fn write_observations(path: &Path, observations: &[Observation]) -> Result<(), IoFormatError> {
    let mut w = writer(path)?;
    w.write_record(["bill_id", "gat", "raw_value"])
        .map_err(|e| csv_err(path, e))?;
    for obs in observations {
        w.write_record([
            obs.bill_id.as_str(),
            obs.gat.as_str(),
            obs.raw_value.as_deref().unwrap_or(""),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Empty `raw_value` fields read back as null (the format cannot tell an
/// extracted empty string from a miss; the contract says null).
pub fn read_observations(path: &Path) -> Result<Vec<Observation>, IoFormatError> {
    let mut r = reader(path)?;
    expect_header(path, &mut r, &["bill_id", "gat", "raw_value"])?;
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != 3 {
            return Err(format_err(path, i + 2, "expected 3 columns"));
        }
        out.push(Observation {
            bill_id: record[0].to_string(),
            gat: record[1].to_string(),
            raw_value: (!record[2].is_empty()).then(|| record[2].to_string()),
        });
    }
    Ok(out)
}

// ------------------------------------------------------------- cleaned CSV

pub fn write_cleaned(path: &Path, rows: &[CleanedRow]) -> Result<(), IoFormatError> {
    let mut w = writer(path)?;
    w.write_record(["bill_id", "gat", "type", "value"])
        .map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record([
            row.bill_id.as_str(),
            row.gat.as_str(),
            row.value.tag(),
            row.value.render().as_str(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_cleaned(path: &Path) -> Result<Vec<CleanedRow>, IoFormatError> {
    let mut r = reader(path)?;
    expect_header(path, &mut r, &["bill_id", "gat", "type", "value"])?;
    let mut out = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != 4 {
            return Err(format_err(path, i + 2, "expected 4 columns"));
        }
        let value = CleanValue::parse_canonical(&record[2], &record[3])
            .map_err(|m| format_err(path, i + 2, m))?;
        out.push(CleanedRow {
            bill_id: record[0].to_string(),
            gat: record[1].to_string(),
            value,
        });
    }
    Ok(out)
}

pub fn write_clean_errors(path: &Path, errors: &[CleanError]) -> Result<(), IoFormatError> {
    let mut w = writer(path)?;
    w.write_record(["bill_id", "gat", "raw_value", "reason"])
        .map_err(|e| csv_err(path, e))?;
    for e in errors {
        w.write_record([
            e.bill_id.as_str(),
            e.gat.as_str(),
            e.raw_value.as_str(),
            e.reason.as_str(),
        ])
        .map_err(|err| csv_err(path, err))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_quarantine(path: &Path, entries: &[QuarantineEntry]) -> Result<(), IoFormatError> {
    let mut w = writer(path)?;
    w.write_record(["key", "reason"]).map_err(|e| csv_err(path, e))?;
    for entry in entries {
        w.write_record([entry.key.as_str(), entry.reason.as_str()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

// ------------------------------------------------------------ entity CSVs

pub const BILLS_FILE: &str = "bills.csv";
pub const PODS_FILE: &str = "pods.csv";
pub const USERS_FILE: &str = "users.csv";

/// `bills.csv`, `pods.csv`, `users.csv` under `dir`, columns in spec order,
/// rows sorted by key, year_of_birth in place of any age column.
pub fn write_tables(dir: &Path, tables: &EntityTables) -> Result<(), IoFormatError> {
    let path = dir.join(BILLS_FILE);
    let mut w = writer(&path)?;
    let mut header = vec!["bill_id".to_string(), "pod_id".to_string()];
    header.extend(tables.bill_columns.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for bill in &tables.bills {
        let mut record = vec![bill.bill_id.clone(), bill.pod_id.clone()];
        record.extend(bill.values.iter().map(CleanValue::render));
        w.write_record(&record).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    let path = dir.join(PODS_FILE);
    let mut w = writer(&path)?;
    let mut header = vec!["pod_id".to_string(), "user_id".to_string()];
    header.extend(tables.pod_columns.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for pod in &tables.pods {
        let mut record = vec![pod.pod_id.clone(), pod.user_id.clone()];
        record.extend(pod.values.iter().map(CleanValue::render));
        w.write_record(&record).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    let path = dir.join(USERS_FILE);
    let mut w = writer(&path)?;
    let mut header = vec!["user_id".to_string(), "year_of_birth".to_string()];
    header.extend(tables.user_columns.iter().cloned());
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for user in &tables.users {
        let mut record = vec![
            user.user_id.clone(),
            user.year_of_birth.map(|y| y.to_string()).unwrap_or_default(),
        ];
        record.extend(user.values.iter().map(CleanValue::render));
        w.write_record(&record).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))
}

/// Read the three entity CSVs back, typing each column from the spec.
pub fn read_tables(dir: &Path, spec: &MappingSpec) -> Result<EntityTables, IoFormatError> {
    use crate::mapping::{Entity, Role};
    let typed = |name: &str| -> &'static str {
        spec.gat(name)
            .map(|g| match g.output_type {
                crate::mapping::OutputType::Decimal => "decimal",
                crate::mapping::OutputType::Integer => "integer",
                crate::mapping::OutputType::Date => "date",
                crate::mapping::OutputType::Text => "text",
                crate::mapping::OutputType::HashedText => "hashed_text",
            })
            .unwrap_or("text")
    };
    let parse_cell = |path: &Path, line: usize, name: &str, text: &str| {
        if text.is_empty() {
            Ok(CleanValue::Null)
        } else {
            CleanValue::parse_canonical(typed(name), text).map_err(|m| format_err(path, line, m))
        }
    };

    let mut tables = EntityTables {
        bill_columns: spec
            .gats
            .iter()
            .filter(|g| g.entity == Entity::Bill)
            .map(|g| g.name.clone())
            .collect(),
        pod_columns: spec
            .gats
            .iter()
            .filter(|g| g.entity == Entity::Pod && g.role != Role::Identifier)
            .map(|g| g.name.clone())
            .collect(),
        user_columns: spec
            .gats
            .iter()
            .filter(|g| {
                g.entity == Entity::User && g.role != Role::Identifier && g.role != Role::Age
            })
            .map(|g| g.name.clone())
            .collect(),
        ..Default::default()
    };

    let path = dir.join(BILLS_FILE);
    let mut r = reader(&path)?;
    let mut expected = vec!["bill_id".to_string(), "pod_id".to_string()];
    expected.extend(tables.bill_columns.iter().cloned());
    expect_header_owned(&path, &mut r, &expected)?;
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(&path, e))?;
        let mut values = Vec::new();
        for (c, name) in tables.bill_columns.iter().enumerate() {
            values.push(parse_cell(&path, i + 2, name, &record[c + 2])?);
        }
        tables.bills.push(BillRow {
            bill_id: record[0].to_string(),
            pod_id: record[1].to_string(),
            values,
        });
    }

    let path = dir.join(PODS_FILE);
    let mut r = reader(&path)?;
    let mut expected = vec!["pod_id".to_string(), "user_id".to_string()];
    expected.extend(tables.pod_columns.iter().cloned());
    expect_header_owned(&path, &mut r, &expected)?;
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(&path, e))?;
        let mut values = Vec::new();
        for (c, name) in tables.pod_columns.iter().enumerate() {
            values.push(parse_cell(&path, i + 2, name, &record[c + 2])?);
        }
        tables.pods.push(PodRow {
            pod_id: record[0].to_string(),
            user_id: record[1].to_string(),
            values,
        });
    }

    let path = dir.join(USERS_FILE);
    let mut r = reader(&path)?;
    let mut expected = vec!["user_id".to_string(), "year_of_birth".to_string()];
    expected.extend(tables.user_columns.iter().cloned());
    expect_header_owned(&path, &mut r, &expected)?;
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(&path, e))?;
        let year_of_birth = if record[1].is_empty() {
            None
        } else {
            Some(
                record[1]
                    .parse::<i64>()
                    .map_err(|e| format_err(&path, i + 2, format!("bad year_of_birth: {e}")))?,
            )
        };
        let mut values = Vec::new();
        for (c, name) in tables.user_columns.iter().enumerate() {
            values.push(parse_cell(&path, i + 2, name, &record[c + 2])?);
        }
        tables.users.push(UserRow {
            user_id: record[0].to_string(),
            year_of_birth,
            values,
        });
    }
    Ok(tables)
}

// ----------------------------------------------------------- features CSV

/// Header: `pod_id,offer,<feature columns...>,churn`.
pub fn write_features(path: &Path, set: &FeatureSet) -> Result<(), IoFormatError> {
    let mut w = writer(path)?;
    let mut header = vec!["pod_id".to_string(), "offer".to_string()];
    header.extend(set.columns.iter().map(|c| c.name.clone()));
    header.push("churn".to_string());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in &set.rows {
        let mut record = vec![row.pod_id.clone(), row.offer_code.to_string()];
        record.extend(row.values.iter().map(|c| c.render()));
        record.push(row.churn.to_string());
        w.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a features file. Column kinds are recovered from each cell's shape
/// (a `.` means decimal); the distinction only matters for re-rendering.
pub fn read_features(path: &Path) -> Result<FeatureSet, IoFormatError> {
    let mut r = reader(path)?;
    let header = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    if header.len() < 3 || header[0] != "pod_id" || header[1] != "offer" {
        return Err(format_err(path, 1, "expected pod_id,offer,...,churn header"));
    }
    if header.last().map(String::as_str) != Some("churn") {
        return Err(format_err(path, 1, "last column must be churn"));
    }
    let feature_names = &header[2..header.len() - 1];
    let mut columns: Vec<crate::analytics::FeatureColumn> = feature_names
        .iter()
        .map(|name| crate::analytics::FeatureColumn {
            name: name.clone(),
            kind: ColumnKind::IntegerValue,
        })
        .collect();

    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != header.len() {
            return Err(format_err(path, i + 2, "column count mismatch"));
        }
        let offer_code = record[1]
            .parse::<i64>()
            .map_err(|e| format_err(path, i + 2, format!("bad offer code: {e}")))?;
        let mut values = Vec::with_capacity(columns.len());
        for (c, cell) in record.iter().skip(2).take(columns.len()).enumerate() {
            let value = if cell.contains('.') {
                columns[c].kind = ColumnKind::DecimalSum;
                FeatureCell::Dec(
                    crate::value::parse_canonical_decimal(cell)
                        .map_err(|m| format_err(path, i + 2, m))?,
                )
            } else {
                FeatureCell::Int(
                    cell.parse::<i64>()
                        .map_err(|e| format_err(path, i + 2, format!("bad integer cell: {e}")))?,
                )
            };
            values.push(value);
        }
        let churn = match &record[header.len() - 1] {
            "0" => 0u8,
            "1" => 1u8,
            other => return Err(format_err(path, i + 2, format!("bad churn label {other:?}"))),
        };
        rows.push(FeatureRow {
            pod_id: record[0].to_string(),
            offer_code,
            values,
            churn,
        });
    }
    Ok(FeatureSet { columns, rows })
}

// ------------------------------------------------------------- JSON files

/// Deterministic JSON: pretty-printed, sorted keys (BTreeMap-backed
/// serializations), trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), IoFormatError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| {
        io_err(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        )
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn write_encodings(path: &Path, encodings: &EncodingTables) -> Result<(), IoFormatError> {
    write_json(path, encodings)
}

pub fn write_correlations(path: &Path, entries: &[CorrelationEntry]) -> Result<(), IoFormatError> {
    let mut w = writer(path)?;
    w.write_record(["feature", "r"]).map_err(|e| csv_err(path, e))?;
    for entry in entries {
        let r = entry
            .r
            .map(|r| format!("{r:.6}"))
            .unwrap_or_else(|| "undefined".to_string());
        w.write_record([entry.feature.as_str(), r.as_str()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn expect_header(
    path: &Path,
    r: &mut csv::Reader<std::fs::File>,
    expected: &[&str],
) -> Result<(), IoFormatError> {
    let owned: Vec<String> = expected.iter().map(|s| s.to_string()).collect();
    expect_header_owned(path, r, &owned)
}

fn expect_header_owned(
    path: &Path,
    r: &mut csv::Reader<std::fs::File>,
    expected: &[String],
) -> Result<(), IoFormatError> {
    let header = r.headers().map_err(|e| csv_err(path, e))?;
    let found: Vec<&str> = header.iter().collect();
    if found != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(format_err(
            path,
            1,
            format!("unexpected header {found:?}, expected {expected:?}"),
        ));
    }
    Ok(())
}
