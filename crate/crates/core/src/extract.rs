//! Corpus walking and path resolution: every `*.json` bill under the corpus
//! root becomes one observation per GAT, keyed by the file's corpus-relative
//! path so any value can be traced straight back to its source file.

use crate::mapping::{GatDefinition, JsonPath, MappingSpec, PathStep};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;
use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("corpus root {root:?}: {source}")]
    Root {
        root: String,
        source: std::io::Error,
    },
}

/// One cell of the long-format columnar output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Observation {
    /// Corpus-relative file path, `/`-separated, extension lowercased.
    pub bill_id: String,
    pub gat: String,
    /// `None` when no fallback path yielded a scalar.
    pub raw_value: Option<String>,
}

/// Per-run bookkeeping: what was seen, what failed and why, how many nulls
/// each GAT produced.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExtractionReport {
    pub files_seen: u64,
    pub files_failed: u64,
    pub failures: Vec<FileFailure>,
    pub null_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileFailure {
    pub bill_id: String,
    pub reason: String,
}

/// Follow `path` through a parsed document. Total: every miss is `None`.
///
/// A key step on a non-object and an out-of-range index are misses. A
/// wildcard scans the array in order and takes the first element whose
/// remaining path reaches a scalar. Scalars are stringified verbatim:
/// strings without quotes, numbers and booleans in their JSON source text.
/// JSON `null` and composite leaves are misses.
pub fn resolve_path(document: &Value, path: &JsonPath) -> Option<String> {
    resolve_steps(document, &path.steps)
}

fn resolve_steps(node: &Value, steps: &[PathStep]) -> Option<String> {
    let Some(step) = steps.first() else {
        return scalar_text(node);
    };
    let rest = &steps[1..];
    match step {
        PathStep::Key(k) => resolve_steps(node.as_object()?.get(k)?, rest),
        PathStep::Index(i) => resolve_steps(node.as_array()?.get(*i)?, rest),
        PathStep::Wildcard => node
            .as_array()?
            .iter()
            .find_map(|element| resolve_steps(element, rest)),
    }
}

fn scalar_text(node: &Value) -> Option<String> {
    match node {
        Value::String(s) => Some(s.clone()),
        // serde_json's arbitrary_precision keeps the source text of numbers.
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Null | Value::Object(_) | Value::Array(_) => None,
    }
}

/// Resolve every GAT against one parsed bill: one observation per GAT in
/// spec order, first non-null fallback path wins.
pub fn extract_bill(bill_id: &str, document: &Value, spec: &MappingSpec) -> Vec<Observation> {
    spec.gats
        .iter()
        .map(|gat| Observation {
            bill_id: bill_id.to_string(),
            gat: gat.name.clone(),
            raw_value: resolve_gat(document, gat),
        })
        .collect()
}

fn resolve_gat(document: &Value, gat: &GatDefinition) -> Option<String> {
    gat.paths.iter().find_map(|p| resolve_path(document, p))
}

/// Walk the corpus, parse every `*.json` file (any depth, extension matched
/// case-insensitively) and extract all GATs.
///
/// Files are processed in parallel; the result is sorted by (bill_id, gat)
/// before returning, so output is byte-identical for any worker count.
/// Malformed or unreadable files are recorded in the report and skipped.
pub fn extract_corpus(
    root: &Path,
    spec: &MappingSpec,
) -> Result<(Vec<Observation>, ExtractionReport), ExtractError> {
    let mut files = collect_bill_files(root)?;
    // Normalized ids must be unique; on a collision (e.g. `a.json` vs
    // `a.JSON`) the lexicographically first original name wins.
    files.sort();
    let mut seen_ids = std::collections::BTreeSet::new();
    let mut duplicates = Vec::new();
    files.retain(|(bill_id, path)| {
        if seen_ids.insert(bill_id.clone()) {
            true
        } else {
            duplicates.push(FileFailure {
                bill_id: format!("{}", path.display()),
                reason: format!("duplicate bill id {bill_id:?} after extension normalization"),
            });
            false
        }
    });

    let results: Vec<Result<Vec<Observation>, FileFailure>> = files
        .par_iter()
        .map(|(bill_id, path)| {
            let mut text = String::new();
            std::fs::File::open(path)
                .and_then(|mut f| f.read_to_string(&mut text))
                .map_err(|e| FileFailure {
                    bill_id: bill_id.clone(),
                    reason: format!("read error: {e}"),
                })?;
            let document: Value = serde_json::from_str(&text).map_err(|e| FileFailure {
                bill_id: bill_id.clone(),
                reason: format!("JSON parse error: {e}"),
            })?;
            Ok(extract_bill(bill_id, &document, spec))
        })
        .collect();

    let mut observations = Vec::new();
    let mut report = ExtractionReport {
        files_seen: (files.len() + duplicates.len()) as u64,
        ..Default::default()
    };
    report.failures.extend(duplicates);
    for gat in &spec.gats {
        report.null_counts.insert(gat.name.clone(), 0);
    }
    for result in results {
        match result {
            Ok(obs) => {
                for o in &obs {
                    if o.raw_value.is_none() {
                        *report.null_counts.get_mut(&o.gat).expect("gat known") += 1;
                    }
                }
                observations.extend(obs);
            }
            Err(failure) => report.failures.push(failure),
        }
    }
    report.failures.sort_by(|a, b| a.bill_id.cmp(&b.bill_id));
    report.files_failed = report.failures.len() as u64;

    observations.sort_by(|a, b| (&a.bill_id, &a.gat).cmp(&(&b.bill_id, &b.gat)));
    Ok((observations, report))
}

fn collect_bill_files(root: &Path) -> Result<Vec<(String, std::path::PathBuf)>, ExtractError> {
    if !root.is_dir() {
        return Err(ExtractError::Root {
            root: format!("{}", root.display()),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root).follow_links(false) {
        let entry = entry.map_err(|e| ExtractError::Root {
            root: format!("{}", root.display()),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let is_json = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if !is_json {
            continue;
        }
        files.push((bill_id_for(root, entry.path()), entry.path().to_path_buf()));
    }
    Ok(files)
}

/// Corpus-relative id: `/` separators on every platform, extension
/// normalized to lowercase.
fn bill_id_for(root: &Path, file: &Path) -> String {
    let rel = file.strip_prefix(root).unwrap_or(file);
    let mut id = rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/");
    if let Some(dot) = id.rfind('.') {
        let ext = id[dot + 1..].to_ascii_lowercase();
        id.truncate(dot + 1);
        id.push_str(&ext);
    }
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::parse_mapping_file;
    use serde_json::json;

    fn path(s: &str) -> JsonPath {
        crate::mapping::parse_json_path(s).unwrap()
    }

    #[test]
    fn resolves_nested_keys() {
        let doc = json!({"a": {"b": "x"}});
        assert_eq!(resolve_path(&doc, &path("a.b")), Some("x".into()));
        assert_eq!(resolve_path(&doc, &path("a.c")), None);
        assert_eq!(resolve_path(&doc, &path("a")), None); // object leaf
    }

    #[test]
    fn missing_key_on_empty_object_is_null() {
        let doc = json!({"a": {}});
        assert_eq!(resolve_path(&doc, &path("a.b")), None);
    }

    #[test]
    fn wildcard_takes_first_resolving_element() {
        let doc = json!({"a": [{"v": 1}, {"v": 2}]});
        assert_eq!(resolve_path(&doc, &path("a[*].v")), Some("1".into()));

        let doc = json!({"a": [{"w": 1}, {"v": 2}]});
        assert_eq!(resolve_path(&doc, &path("a[*].v")), Some("2".into()));

        let doc = json!({"a": []});
        assert_eq!(resolve_path(&doc, &path("a[*].v")), None);
    }

    #[test]
    fn index_steps_and_misses() {
        let doc = json!({"a": [10, 20]});
        assert_eq!(resolve_path(&doc, &path("a[1]")), Some("20".into()));
        assert_eq!(resolve_path(&doc, &path("a[2]")), None);
        assert_eq!(resolve_path(&doc, &path("a[0].k")), None); // key on scalar
    }

    #[test]
    fn scalars_keep_their_source_text() {
        // arbitrary_precision keeps trailing zeros and big integers intact
        let doc: Value = serde_json::from_str(r#"{"n": 1.50, "m": 10000000000000000001, "b": true, "z": null}"#)
            .unwrap();
        assert_eq!(resolve_path(&doc, &path("n")), Some("1.50".into()));
        assert_eq!(
            resolve_path(&doc, &path("m")),
            Some("10000000000000000001".into())
        );
        assert_eq!(resolve_path(&doc, &path("b")), Some("true".into()));
        assert_eq!(resolve_path(&doc, &path("z")), None);
    }

    fn three_gat_spec() -> MappingSpec {
        parse_mapping_file(&format!(
            "{}\nbill_date;meta.date;date;bill;bill_date\n\
             pod_id;pod.code;text;pod;identifier\n\
             user_id;user.code|user.id;text;user;identifier\n",
            crate::mapping::HEADER
        ))
        .unwrap()
    }

    #[test]
    fn extract_bill_emits_one_observation_per_gat_in_spec_order() {
        let spec = three_gat_spec();
        let doc = json!({"meta": {"date": "10 January 2021"}, "pod": {"code": "P1"}});
        let obs = extract_bill("m/x.json", &doc, &spec);
        assert_eq!(obs.len(), 3);
        assert_eq!(obs[0].gat, "bill_date");
        assert_eq!(obs[0].raw_value.as_deref(), Some("10 January 2021"));
        assert_eq!(obs[1].raw_value.as_deref(), Some("P1"));
        assert_eq!(obs[2].raw_value, None);
    }

    #[test]
    fn fallback_uses_second_path_when_first_misses() {
        let spec = three_gat_spec();
        let doc = json!({"user": {"id": "U9"}});
        let obs = extract_bill("m/x.json", &doc, &spec);
        assert_eq!(obs[2].raw_value.as_deref(), Some("U9"));
    }

    #[test]
    fn empty_document_yields_all_nulls() {
        let spec = three_gat_spec();
        let obs = extract_bill("m/x.json", &json!({}), &spec);
        assert!(obs.iter().all(|o| o.raw_value.is_none()));
    }

    #[test]
    fn corpus_walk_counts_sorts_and_records_failures() {
        let dir = tempfile::tempdir().unwrap();
        for (sub, name, body) in [
            ("2021-01", "b.json", r#"{"meta":{"date":"d"},"pod":{"code":"P1"},"user":{"code":"U1"}}"#),
            ("2021-01", "a.json", r#"{"pod":{"code":"P2"}}"#),
            ("2021-02", "c.JSON", r#"{"user":{"id":"U2"}}"#),
            ("2021-02", "bad.json", "{ not json"),
            ("2021-02", "ignored.txt", "nope"),
        ] {
            let d = dir.path().join(sub);
            std::fs::create_dir_all(&d).unwrap();
            std::fs::write(d.join(name), body).unwrap();
        }
        let spec = three_gat_spec();
        let (obs, report) = extract_corpus(dir.path(), &spec).unwrap();
        assert_eq!(report.files_seen, 4);
        assert_eq!(report.files_failed, 1);
        assert_eq!(report.failures[0].bill_id, "2021-02/bad.json");
        assert!(report.failures[0].reason.contains("JSON parse error"));
        // 3 parsed files x 3 gats
        assert_eq!(obs.len(), 9);
        let ids: Vec<&str> = obs.iter().map(|o| o.bill_id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        // extension normalized
        assert!(obs.iter().any(|o| o.bill_id == "2021-02/c.json"));
        // null accounting: a.json misses date+user, c.json misses date+pod
        assert_eq!(report.null_counts["bill_date"], 2);
        assert_eq!(report.null_counts["pod_id"], 1);
        assert_eq!(report.null_counts["user_id"], 1);
    }

    #[test]
    fn empty_corpus_is_empty_output() {
        let dir = tempfile::tempdir().unwrap();
        let spec = three_gat_spec();
        let (obs, report) = extract_corpus(dir.path(), &spec).unwrap();
        assert!(obs.is_empty());
        assert_eq!(report.files_seen, 0);
    }

    #[test]
    fn missing_root_is_fatal() {
        let spec = three_gat_spec();
        assert!(extract_corpus(Path::new("/nonexistent/nowhere"), &spec).is_err());
    }
}
