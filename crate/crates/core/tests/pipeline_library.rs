//! Library-level end-to-end runs against the generator's ground truth,
//! plus the structural invariants the fused tables must satisfy.

use billprep_core::analytics::build_feature_vectors;
use billprep_core::clean::clean_observation;
use billprep_core::extract::{extract_corpus, resolve_path};
use billprep_core::fuse::{build_tables, pivot, split_entities, CleanedRow};
use billprep_core::mapping::MonthLocale;
use billprep_core::synthgen::{default_mapping_spec, generate_corpus, GroundTruth, SynthConfig};

struct RunOutput {
    tables: billprep_core::fuse::EntityTables,
    features: billprep_core::analytics::FeatureSet,
    encodings: billprep_core::analytics::EncodingTables,
    observation_count: usize,
    files_seen: u64,
}

fn run_library_pipeline(corpus: &std::path::Path, config: &SynthConfig) -> RunOutput {
    let spec = default_mapping_spec().with_month_locale(config.month_locale);
    let (observations, report) = extract_corpus(corpus, &spec).unwrap();
    assert_eq!(report.files_failed, 0);
    assert_eq!(
        observations.len() as u64,
        report.files_seen * spec.gats.len() as u64
    );

    let mut cleaned = Vec::new();
    for obs in &observations {
        let gat = spec.gat(&obs.gat).unwrap();
        let value = clean_observation(obs, gat, &config.salt, spec.month_locale).unwrap();
        cleaned.push(CleanedRow {
            bill_id: obs.bill_id.clone(),
            gat: obs.gat.clone(),
            value,
        });
    }

    let (wide, quarantine) = pivot(&cleaned, &spec).unwrap();
    assert!(quarantine.is_empty(), "synthetic corpora have no quarantine");
    let split = split_entities(&wide, &spec);
    let (tables, quarantine) = build_tables(split, &spec).unwrap();
    assert!(quarantine.is_empty());

    let build = build_feature_vectors(&tables, &spec).unwrap();
    assert!(build.ledger.is_empty());
    RunOutput {
        tables,
        features: build.set,
        encodings: build.encodings,
        observation_count: observations.len(),
        files_seen: report.files_seen,
    }
}

fn check_against_truth(output: &RunOutput, truth: &GroundTruth) {
    assert_eq!(output.tables, truth.tables);
    assert_eq!(output.features, truth.features);
    assert_eq!(output.encodings, truth.encodings);
}

/// The case for normalizing, checked structurally: three normalized
/// tables never cost more cells than the denormalized wide table.
fn check_shape(output: &RunOutput) {
    let t = &output.tables;
    assert!(t.bills.len() >= t.pods.len());
    assert!(t.pods.len() >= t.users.len());
    let gat_count =
        t.bill_columns.len() + t.pod_columns.len() + t.user_columns.len() + 2; // + the two identifier GATs
    let wide_cells = t.bills.len() * (1 + gat_count);
    let normalized_cells = t.bills.len() * (2 + t.bill_columns.len())
        + t.pods.len() * (2 + t.pod_columns.len())
        + t.users.len() * (2 + t.user_columns.len());
    assert!(
        normalized_cells <= wide_cells,
        "normalized {normalized_cells} > wide {wide_cells}"
    );
    t.check_referential_integrity().unwrap();
}

#[test]
fn english_corpus_reproduces_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        users: 60,
        months_span: 8,
        churn_prevalence: 0.1,
        inconsistency_probability: 0.3,
        seed: 2024,
        ..Default::default()
    };
    let truth = generate_corpus(&config, dir.path()).unwrap();
    let output = run_library_pipeline(dir.path(), &config);
    assert_eq!(output.files_seen as usize, truth.bill_count);
    check_against_truth(&output, &truth);
    check_shape(&output);
}

#[test]
fn italian_locale_corpus_reproduces_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        users: 25,
        month_locale: MonthLocale::Italian,
        // span crosses a year boundary so ages genuinely shift across bills
        start_month: 11,
        start_year: 2020,
        months_span: 7,
        churn_prevalence: 0.15,
        inconsistency_probability: 0.4,
        salt: "sale".into(),
        seed: 77,
        ..Default::default()
    };
    let truth = generate_corpus(&config, dir.path()).unwrap();
    let output = run_library_pipeline(dir.path(), &config);
    check_against_truth(&output, &truth);
    check_shape(&output);
}

/// The year-of-birth conversion makes fusion invariant to which bill
/// carried the age: with a year-crossing span the raw ages differ between
/// bills, yet every user fuses to one stable birth year.
#[test]
fn age_conversion_is_bill_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        users: 40,
        start_month: 10,
        start_year: 2020,
        months_span: 9,
        seed: 31,
        ..Default::default()
    };
    let truth = generate_corpus(&config, dir.path()).unwrap();
    let output = run_library_pipeline(dir.path(), &config);
    for (user, expected) in output.tables.users.iter().zip(&truth.tables.users) {
        assert_eq!(user.year_of_birth, expected.year_of_birth);
        assert!(user.year_of_birth.is_some());
    }
}

/// Debuggability: the bill_id of any observation leads back to a file from
/// which resolve_path reproduces the recorded raw value.
#[test]
fn observations_are_reproducible_from_source_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        users: 10,
        seed: 5,
        ..Default::default()
    };
    generate_corpus(&config, dir.path()).unwrap();
    let spec = default_mapping_spec();
    let (observations, _) = extract_corpus(dir.path(), &spec).unwrap();
    assert!(observations.len() >= spec.gats.len());
    for obs in observations.iter().step_by(7) {
        let text = std::fs::read_to_string(dir.path().join(&obs.bill_id)).unwrap();
        let document: serde_json::Value = serde_json::from_str(&text).unwrap();
        let gat = spec.gat(&obs.gat).unwrap();
        let resolved = gat.paths.iter().find_map(|p| resolve_path(&document, p));
        assert_eq!(resolved, obs.raw_value, "{} / {}", obs.bill_id, obs.gat);
    }
}

/// Exhaustive churn-label law: for every POD, exactly the vector whose
/// offer matches the last bill's offer has churn 0, every other vector 1;
/// and summed billed_days are conserved across the POD's vectors.
#[test]
fn churn_labels_and_aggregates_hold_for_every_pod() {
    use billprep_core::analytics::FeatureCell;
    use billprep_core::value::CleanValue;
    use std::collections::BTreeMap;

    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        users: 120,
        churn_prevalence: 0.2,
        seed: 404,
        ..Default::default()
    };
    generate_corpus(&config, dir.path()).unwrap();
    let output = run_library_pipeline(dir.path(), &config);
    let spec = default_mapping_spec();

    let offer_idx = output
        .tables
        .bill_columns
        .iter()
        .position(|c| c == "offer")
        .unwrap();
    let date_idx = output
        .tables
        .bill_columns
        .iter()
        .position(|c| c == "bill_date")
        .unwrap();
    let days_idx = output
        .tables
        .bill_columns
        .iter()
        .position(|c| c == "billed_days")
        .unwrap();
    let days_feature = output
        .features
        .columns
        .iter()
        .position(|c| c.name == "billed_days")
        .unwrap();
    let offer_codes = &output.encodings[&spec.offer_gat().unwrap().name];

    let mut by_pod: BTreeMap<&str, Vec<&billprep_core::fuse::BillRow>> = BTreeMap::new();
    for bill in &output.tables.bills {
        by_pod.entry(bill.pod_id.as_str()).or_default().push(bill);
    }
    assert!(!by_pod.is_empty());
    for (pod_id, bills) in by_pod {
        let last = bills
            .iter()
            .max_by(|a, b| {
                let da = match &a.values[date_idx] {
                    CleanValue::Date(d) => *d,
                    _ => unreachable!(),
                };
                let db = match &b.values[date_idx] {
                    CleanValue::Date(d) => *d,
                    _ => unreachable!(),
                };
                (da, &a.bill_id).cmp(&(db, &b.bill_id))
            })
            .unwrap();
        let last_offer_code = offer_codes[&last.values[offer_idx].render()];

        let vectors: Vec<_> = output
            .features
            .rows
            .iter()
            .filter(|r| r.pod_id == pod_id)
            .collect();
        assert!(!vectors.is_empty());
        for vector in &vectors {
            let expected = u8::from(vector.offer_code != last_offer_code);
            assert_eq!(vector.churn, expected, "pod {pod_id}");
        }
        assert_eq!(
            vectors.iter().filter(|v| v.churn == 0).count(),
            1,
            "pod {pod_id}: exactly one non-churn vector"
        );

        // aggregate conservation for billed_days
        let bill_sum: i64 = bills
            .iter()
            .map(|b| match &b.values[days_idx] {
                CleanValue::Integer(v) => *v,
                _ => 0,
            })
            .sum();
        let vector_sum: i64 = vectors
            .iter()
            .map(|v| match v.values[days_feature] {
                FeatureCell::Int(d) => d,
                FeatureCell::Dec(d) => d.minor(),
            })
            .sum();
        assert_eq!(bill_sum, vector_sum, "pod {pod_id}: billed_days conserved");
    }
}

/// Bills of one POD are spaced exactly by the configured cadence.
#[test]
fn bill_cadence_is_honored() {
    use billprep_core::value::CleanValue;
    use std::collections::BTreeMap;

    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        users: 30,
        months_span: 9,
        bill_cadence_months: 2,
        seed: 11,
        ..Default::default()
    };
    let truth = generate_corpus(&config, dir.path()).unwrap();
    let date_idx = truth
        .tables
        .bill_columns
        .iter()
        .position(|c| c == "bill_date")
        .unwrap();
    let mut months: BTreeMap<&str, Vec<i32>> = BTreeMap::new();
    for bill in &truth.tables.bills {
        let CleanValue::Date(d) = &bill.values[date_idx] else {
            unreachable!()
        };
        months
            .entry(bill.pod_id.as_str())
            .or_default()
            .push(d.year * 12 + d.month as i32);
    }
    for (pod, mut ms) in months {
        ms.sort_unstable();
        for pair in ms.windows(2) {
            assert_eq!(pair[1] - pair[0], 2, "pod {pod}: cadence broken: {ms:?}");
        }
    }
}

/// |observations| = files_seen x |gats| on corpora with no failures.
#[test]
fn observation_count_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let config = SynthConfig {
        users: 7,
        seed: 3,
        ..Default::default()
    };
    generate_corpus(&config, dir.path()).unwrap();
    let spec = default_mapping_spec();
    let output = run_library_pipeline(dir.path(), &config);
    assert_eq!(
        output.observation_count,
        output.files_seen as usize * spec.gats.len()
    );
}
