//! SQL dump of the entity tables: CREATE TABLE plus INSERT statements,
//! emitted in dependency order (users, pods, bills) so the file loads into
//! any engine that enforces the foreign keys.

use crate::fuse::EntityTables;
use crate::mapping::{MappingSpec, OutputType};
use crate::value::CleanValue;
use std::fmt::Write;

fn sql_type(output_type: OutputType) -> &'static str {
    match output_type {
        OutputType::Decimal => "NUMERIC(18,2)",
        OutputType::Integer => "BIGINT",
        OutputType::Date => "DATE",
        OutputType::Text | OutputType::HashedText => "TEXT",
    }
}

fn column_type(spec: &MappingSpec, name: &str) -> &'static str {
    spec.gat(name).map(|g| sql_type(g.output_type)).unwrap_or("TEXT")
}

fn sql_literal(value: &CleanValue) -> String {
    match value {
        CleanValue::Null => "NULL".to_string(),
        CleanValue::Decimal(_) | CleanValue::Integer(_) => value.render(),
        CleanValue::Date(d) => format!("'{d}'"),
        CleanValue::Text(s) | CleanValue::HashedText(s) => quote(s),
    }
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

pub fn sql_dump(tables: &EntityTables, spec: &MappingSpec) -> String {
    let mut out = String::new();

    let user_cols: String = tables
        .user_columns
        .iter()
        .map(|c| format!(",\n  {} {}", c, column_type(spec, c)))
        .collect();
    writeln!(
        out,
        "CREATE TABLE users (\n  user_id TEXT PRIMARY KEY,\n  year_of_birth BIGINT{user_cols}\n);"
    )
    .unwrap();

    let pod_cols: String = tables
        .pod_columns
        .iter()
        .map(|c| format!(",\n  {} {}", c, column_type(spec, c)))
        .collect();
    writeln!(
        out,
        "CREATE TABLE pods (\n  pod_id TEXT PRIMARY KEY,\n  user_id TEXT NOT NULL REFERENCES users(user_id){pod_cols}\n);"
    )
    .unwrap();

    let bill_cols: String = tables
        .bill_columns
        .iter()
        .map(|c| format!(",\n  {} {}", c, column_type(spec, c)))
        .collect();
    writeln!(
        out,
        "CREATE TABLE bills (\n  bill_id TEXT PRIMARY KEY,\n  pod_id TEXT NOT NULL REFERENCES pods(pod_id){bill_cols}\n);"
    )
    .unwrap();

    for user in &tables.users {
        let mut values = vec![
            quote(&user.user_id),
            user.year_of_birth
                .map(|y| y.to_string())
                .unwrap_or_else(|| "NULL".into()),
        ];
        values.extend(user.values.iter().map(sql_literal));
        writeln!(out, "INSERT INTO users VALUES ({});", values.join(", ")).unwrap();
    }
    for pod in &tables.pods {
        let mut values = vec![quote(&pod.pod_id), quote(&pod.user_id)];
        values.extend(pod.values.iter().map(sql_literal));
        writeln!(out, "INSERT INTO pods VALUES ({});", values.join(", ")).unwrap();
    }
    for bill in &tables.bills {
        let mut values = vec![quote(&bill.bill_id), quote(&bill.pod_id)];
        values.extend(bill.values.iter().map(sql_literal));
        writeln!(out, "INSERT INTO bills VALUES ({});", values.join(", ")).unwrap();
    }
    out
}
