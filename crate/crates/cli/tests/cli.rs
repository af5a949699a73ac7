//! Subcommand contracts: exit codes, validation behavior, stage
//! re-runnability, and pipeline/stage-composition equivalence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn billprep() -> Command {
    Command::new(env!("CARGO_BIN_EXE_billprep"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    billprep()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_success(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn read(path: PathBuf) -> Vec<u8> {
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SYNTH: &str = r#"{ "users": 120, "churn_prevalence": 0.1, "seed": 9, "salt": "s1" }"#;

fn synth_workspace(dir: &Path) {
    write_config(dir, "synth.json", SYNTH);
    let out = run(
        &["synth", "--synth-config", "synth.json", "--out", "work"],
        dir,
    );
    assert_success(&out);
}

fn pipeline_config(dir: &Path, out_dir: &str) -> PathBuf {
    write_config(
        dir,
        &format!("config_{out_dir}.json"),
        &format!(
            r#"{{
  "corpus_root": "work/corpus",
  "mapping_file": "work/mapping.csv",
  "out_dir": "{out_dir}",
  "salt": "s1",
  "analytics": {{ "seed": 4 }}
}}"#
        ),
    )
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["extract", "--definitely-not-a-flag"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage") || text.contains("usage"), "{text}");
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("billprep"));
}

#[test]
fn extract_with_missing_mapping_exits_one_and_writes_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(dir.path().join("corpus")).unwrap();
    let out = run(
        &[
            "extract",
            "--corpus",
            "corpus",
            "--mapping",
            "missing.csv",
            "--out",
            "out",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("out/observations.csv").exists());
    // the run report is always written, with the error recorded
    let report = String::from_utf8(read(dir.path().join("out/report.json"))).unwrap();
    assert!(report.contains("does not exist"));
}

#[test]
fn train_without_seed_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    synth_workspace(dir.path());
    let config = pipeline_config(dir.path(), "out");
    for stage in ["extract", "clean", "fuse", "features"] {
        let out = run(
            &[stage, "--config", config.to_str().unwrap()],
            dir.path(),
        );
        assert_success(&out);
    }
    // config without analytics.seed
    let bare = write_config(
        dir.path(),
        "bare.json",
        r#"{ "mapping_file": "work/mapping.csv", "out_dir": "out", "salt": "s1" }"#,
    );
    let out = run(&["train", "--config", bare.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn clean_runs_twice_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    synth_workspace(dir.path());
    let config = pipeline_config(dir.path(), "out");
    let config = config.to_str().unwrap();
    assert_success(&run(&["extract", "--config", config], dir.path()));
    assert_success(&run(&["clean", "--config", config], dir.path()));
    let first = read(dir.path().join("out/cleaned.csv"));
    assert_success(&run(&["clean", "--config", config], dir.path()));
    assert_eq!(first, read(dir.path().join("out/cleaned.csv")));
}

#[test]
fn pipeline_equals_stage_composition() {
    let dir = tempfile::tempdir().unwrap();
    synth_workspace(dir.path());

    let whole = pipeline_config(dir.path(), "out_whole");
    assert_success(&run(
        &["pipeline", "--config", whole.to_str().unwrap()],
        dir.path(),
    ));

    let steps = pipeline_config(dir.path(), "out_steps");
    let steps = steps.to_str().unwrap();
    for stage in [
        "extract", "clean", "fuse", "features", "train", "evaluate", "correlate",
    ] {
        assert_success(&run(&[stage, "--config", steps], dir.path()));
    }

    for file in [
        "observations.csv",
        "extract_report.json",
        "cleaned.csv",
        "clean_errors.csv",
        "bills.csv",
        "pods.csv",
        "users.csv",
        "quarantine.csv",
        "features.csv",
        "encodings.json",
        "features_ledger.csv",
        "model.json",
        "metrics.json",
        "correlations.csv",
    ] {
        assert_eq!(
            read(dir.path().join("out_whole").join(file)),
            read(dir.path().join("out_steps").join(file)),
            "{file} differs between pipeline and stage composition"
        );
    }
}

#[test]
fn sql_dump_flag_emits_loadable_statements() {
    let dir = tempfile::tempdir().unwrap();
    synth_workspace(dir.path());
    let config = pipeline_config(dir.path(), "out");
    let config = config.to_str().unwrap();
    assert_success(&run(&["extract", "--config", config], dir.path()));
    assert_success(&run(&["clean", "--config", config], dir.path()));
    assert_success(&run(&["fuse", "--config", config, "--sql-dump"], dir.path()));
    let sql = String::from_utf8(read(dir.path().join("out/tables.sql"))).unwrap();
    assert!(sql.contains("CREATE TABLE bills"));
    assert!(sql.contains("REFERENCES users(user_id)"));
    assert!(sql.contains("INSERT INTO pods"));
}

#[test]
fn synth_rejects_invalid_config_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "bad.json", r#"{ "users": 0 }"#);
    let out = run(
        &["synth", "--synth-config", "bad.json", "--out", "w"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    synth_workspace(dir.path());
    let config = pipeline_config(dir.path(), "out");
    let config = config.to_str().unwrap();
    for stage in ["extract", "clean", "fuse", "features"] {
        assert_success(&run(&[stage, "--config", config], dir.path()));
    }
    assert_success(&run(
        &[
            "evaluate",
            "--config",
            config,
            "--model",
            "logistic",
            "--k",
            "3",
            "--undersample-ratio",
            "1.0",
        ],
        dir.path(),
    ));
    let metrics = String::from_utf8(read(dir.path().join("out/metrics.json"))).unwrap();
    assert!(metrics.contains("\"k\": 3"));
    assert!(metrics.contains("\"undersample_ratio\": 1.0"));
}
