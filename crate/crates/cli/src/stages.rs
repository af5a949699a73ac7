//! Stage implementations shared by the individual subcommands and
//! `pipeline`. Each stage reads its declared input files, writes its
//! declared outputs (through a write-then-rename so interrupted runs leave
//! only `.partial` files), and contributes one entry to the run report.

use crate::config::{ModelChoice, PipelineConfig};
use billprep_core::analytics::{
    build_feature_vectors, correlation_report, cross_validate, train_logistic_regression,
    train_random_forest, ModelSpec,
};
use billprep_core::clean::clean_observation;
use billprep_core::csvio;
use billprep_core::fuse::{build_tables, pivot, split_entities, CleanedRow};
use billprep_core::mapping::{parse_mapping_file, MappingSpec};
use billprep_core::synthgen::{self, SynthConfig};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Failure modes mapped to exit codes: validation problems exit 1, I/O
/// failures exit 2.
#[derive(Debug)]
pub enum AppError {
    Validation(String),
    Io(String),
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Validation(m) => write!(f, "error: {m}"),
            AppError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Validation(_) => 1,
            AppError::Io(_) => 2,
        }
    }
}

impl From<csvio::IoFormatError> for AppError {
    fn from(e: csvio::IoFormatError) -> Self {
        match e {
            csvio::IoFormatError::Format { .. } => AppError::Validation(e.to_string()),
            other => AppError::Io(other.to_string()),
        }
    }
}

pub type StageResult = Result<StageSummary, AppError>;

#[derive(Debug, Clone, Serialize)]
pub struct StageSummary {
    pub stage: String,
    pub millis: u128,
    pub counts: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
}

/// The machine-readable run report, written to `<out>/report.json` on
/// every invocation. Timings vary run to run; everything else is
/// deterministic.
#[derive(Debug, Default, Serialize)]
pub struct RunReport {
    pub command: String,
    pub stages: Vec<StageSummary>,
    pub error: Option<String>,
}

pub struct Ctx {
    pub config: PipelineConfig,
    pub report: RunReport,
}

impl Ctx {
    pub fn new(config: PipelineConfig, command: &str) -> Self {
        Ctx {
            config,
            report: RunReport {
                command: command.to_string(),
                ..Default::default()
            },
        }
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    pub fn write_report(&self) {
        let _ = std::fs::create_dir_all(&self.config.out_dir);
        let _ = csvio::write_json(&self.out("report.json"), &self.report);
    }
}

/// Write through a `.partial` sibling and rename into place on success, so
/// a mid-stage failure never leaves a truncated final file.
fn commit<F>(path: &Path, write: F) -> Result<(), AppError>
where
    F: FnOnce(&Path) -> Result<(), csvio::IoFormatError>,
{
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    write(&partial)?;
    std::fs::rename(&partial, path)
        .map_err(|e| AppError::Io(format!("renaming {}: {e}", partial.display())))
}

fn require_file(path: &Path, what: &str) -> Result<(), AppError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(AppError::Validation(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<(), AppError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(AppError::Validation(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn ensure_out_dir(ctx: &Ctx) -> Result<(), AppError> {
    std::fs::create_dir_all(&ctx.config.out_dir)
        .map_err(|e| AppError::Io(format!("creating {}: {e}", ctx.config.out_dir.display())))
}

pub fn load_mapping(ctx: &Ctx) -> Result<MappingSpec, AppError> {
    require_file(&ctx.config.mapping_file, "mapping file")?;
    let text = std::fs::read_to_string(&ctx.config.mapping_file)
        .map_err(|e| AppError::Io(format!("reading {}: {e}", ctx.config.mapping_file.display())))?;
    let spec = parse_mapping_file(&text).map_err(|e| AppError::Validation(e.to_string()))?;
    Ok(spec.with_month_locale(ctx.config.month_locale))
}

fn summary(stage: &str, started: Instant) -> StageSummary {
    StageSummary {
        stage: stage.to_string(),
        millis: started.elapsed().as_millis(),
        counts: BTreeMap::new(),
        outputs: Vec::new(),
    }
}

pub fn stage_extract(ctx: &Ctx) -> StageResult {
    let started = Instant::now();
    let spec = load_mapping(ctx)?;
    require_dir(&ctx.config.corpus_root, "corpus root")?;
    ensure_out_dir(ctx)?;

    let (observations, report) =
        billprep_core::extract::extract_corpus(&ctx.config.corpus_root, &spec)
            .map_err(|e| AppError::Io(e.to_string()))?;

    let obs_path = ctx.out("observations.csv");
    commit(&obs_path, |p| csvio::write_observations(p, &observations))?;
    let report_path = ctx.out("extract_report.json");
    commit(&report_path, |p| csvio::write_json(p, &report))?;

    let mut s = summary("extract", started);
    s.counts.insert("files_seen".into(), report.files_seen);
    s.counts.insert("files_failed".into(), report.files_failed);
    s.counts.insert("observations".into(), observations.len() as u64);
    s.outputs = vec![
        obs_path.display().to_string(),
        report_path.display().to_string(),
    ];
    Ok(s)
}

pub fn stage_clean(ctx: &Ctx) -> StageResult {
    let started = Instant::now();
    let spec = load_mapping(ctx)?;
    let input = ctx.out("observations.csv");
    require_file(&input, "observations file")?;
    ensure_out_dir(ctx)?;

    let observations = csvio::read_observations(&input)?;
    let mut rows = Vec::with_capacity(observations.len());
    let mut errors = Vec::new();
    for obs in &observations {
        let Some(gat) = spec.gat(&obs.gat) else {
            return Err(AppError::Validation(format!(
                "observation references unknown GAT {:?}",
                obs.gat
            )));
        };
        match clean_observation(obs, gat, &ctx.config.salt, spec.month_locale) {
            Ok(value) => rows.push(CleanedRow {
                bill_id: obs.bill_id.clone(),
                gat: obs.gat.clone(),
                value,
            }),
            Err(e) => errors.push(e),
        }
    }

    let cleaned_path = ctx.out("cleaned.csv");
    commit(&cleaned_path, |p| csvio::write_cleaned(p, &rows))?;
    let errors_path = ctx.out("clean_errors.csv");
    commit(&errors_path, |p| csvio::write_clean_errors(p, &errors))?;

    let mut s = summary("clean", started);
    s.counts.insert("values_cleaned".into(), rows.len() as u64);
    s.counts.insert("clean_errors".into(), errors.len() as u64);
    s.outputs = vec![
        cleaned_path.display().to_string(),
        errors_path.display().to_string(),
    ];
    Ok(s)
}

pub fn stage_fuse(ctx: &Ctx) -> StageResult {
    let started = Instant::now();
    let spec = load_mapping(ctx)?;
    let input = ctx.out("cleaned.csv");
    require_file(&input, "cleaned file")?;
    ensure_out_dir(ctx)?;

    let rows = csvio::read_cleaned(&input)?;
    let (wide, mut quarantine) =
        pivot(&rows, &spec).map_err(|e| AppError::Validation(e.to_string()))?;
    let split = split_entities(&wide, &spec);
    let (tables, more_quarantine) =
        build_tables(split, &spec).map_err(|e| AppError::Validation(e.to_string()))?;
    quarantine.extend(more_quarantine);

    // the three table files land together: write into a partial dir, then
    // rename each into place
    let partial_dir = ctx.out("tables.partial");
    std::fs::create_dir_all(&partial_dir)
        .map_err(|e| AppError::Io(format!("creating {}: {e}", partial_dir.display())))?;
    csvio::write_tables(&partial_dir, &tables)?;
    for file in [csvio::BILLS_FILE, csvio::PODS_FILE, csvio::USERS_FILE] {
        std::fs::rename(partial_dir.join(file), ctx.out(file))
            .map_err(|e| AppError::Io(format!("renaming {file}: {e}")))?;
    }
    std::fs::remove_dir(&partial_dir).ok();

    let quarantine_path = ctx.out("quarantine.csv");
    commit(&quarantine_path, |p| csvio::write_quarantine(p, &quarantine))?;

    let mut outputs = vec![
        ctx.out(csvio::BILLS_FILE).display().to_string(),
        ctx.out(csvio::PODS_FILE).display().to_string(),
        ctx.out(csvio::USERS_FILE).display().to_string(),
        quarantine_path.display().to_string(),
    ];
    if ctx.config.sql_dump {
        let sql = billprep_core::sqldump::sql_dump(&tables, &spec);
        let sql_path = ctx.out("tables.sql");
        std::fs::write(&sql_path, sql)
            .map_err(|e| AppError::Io(format!("writing {}: {e}", sql_path.display())))?;
        outputs.push(sql_path.display().to_string());
    }

    let mut s = summary("fuse", started);
    s.counts.insert("bills".into(), tables.bills.len() as u64);
    s.counts.insert("pods".into(), tables.pods.len() as u64);
    s.counts.insert("users".into(), tables.users.len() as u64);
    s.counts.insert("quarantined".into(), quarantine.len() as u64);
    s.outputs = outputs;
    Ok(s)
}

pub fn stage_features(ctx: &Ctx) -> StageResult {
    let started = Instant::now();
    let spec = load_mapping(ctx)?;
    for f in [csvio::BILLS_FILE, csvio::PODS_FILE, csvio::USERS_FILE] {
        require_file(&ctx.out(f), "entity table")?;
    }

    let tables = csvio::read_tables(&ctx.config.out_dir, &spec)?;
    tables
        .check_referential_integrity()
        .map_err(|e| AppError::Validation(e.to_string()))?;
    let build = build_feature_vectors(&tables, &spec)
        .map_err(|e| AppError::Validation(e.to_string()))?;

    let features_path = ctx.out("features.csv");
    commit(&features_path, |p| csvio::write_features(p, &build.set))?;
    let encodings_path = ctx.out("encodings.json");
    commit(&encodings_path, |p| csvio::write_encodings(p, &build.encodings))?;
    let ledger_path = ctx.out("features_ledger.csv");
    commit(&ledger_path, |p| csvio::write_quarantine(p, &build.ledger))?;

    let mut s = summary("features", started);
    s.counts.insert("vectors".into(), build.set.rows.len() as u64);
    s.counts.insert("ledger_entries".into(), build.ledger.len() as u64);
    s.outputs = vec![
        features_path.display().to_string(),
        encodings_path.display().to_string(),
        ledger_path.display().to_string(),
    ];
    Ok(s)
}

fn require_seed(ctx: &Ctx) -> Result<u64, AppError> {
    ctx.config.analytics.seed.ok_or_else(|| {
        AppError::Validation("a seed is required for train/evaluate (set --seed or analytics.seed)".into())
    })
}

pub fn stage_train(ctx: &Ctx) -> StageResult {
    let started = Instant::now();
    let seed = require_seed(ctx)?;
    let features_path = ctx.out("features.csv");
    require_file(&features_path, "features file")?;

    let set = csvio::read_features(&features_path)?;
    let model_path = ctx.out("model.json");
    let analytics = &ctx.config.analytics;
    let train_set = match analytics.undersample_ratio {
        Some(ratio) => billprep_core::analytics::undersample_majority(&set, ratio, seed),
        None => set,
    };
    let (train_cols, train_labels) = train_set.matrix();

    match analytics.model {
        ModelChoice::Forest => {
            let params = analytics.forest.params(seed);
            let model = train_random_forest(&train_cols, &train_labels, &params)
                .map_err(|e| AppError::Validation(e.to_string()))?;
            commit(&model_path, |p| csvio::write_json(p, &model))?;
        }
        ModelChoice::Logistic => {
            let model = train_logistic_regression(&train_cols, &train_labels, &analytics.logistic)
                .map_err(|e| AppError::Validation(e.to_string()))?;
            commit(&model_path, |p| csvio::write_json(p, &model))?;
        }
    }

    let mut s = summary("train", started);
    s.counts.insert("train_vectors".into(), train_set.rows.len() as u64);
    s.outputs = vec![model_path.display().to_string()];
    Ok(s)
}

pub fn stage_evaluate(ctx: &Ctx) -> StageResult {
    let started = Instant::now();
    let seed = require_seed(ctx)?;
    let features_path = ctx.out("features.csv");
    require_file(&features_path, "features file")?;

    let set = csvio::read_features(&features_path)?;
    let analytics = &ctx.config.analytics;
    let model = match analytics.model {
        ModelChoice::Forest => ModelSpec::Forest(analytics.forest.params(seed)),
        ModelChoice::Logistic => ModelSpec::Logistic(analytics.logistic.clone()),
    };
    let outcome = cross_validate(
        &set,
        &model,
        analytics.k_folds,
        analytics.stratified,
        seed,
        analytics.undersample_ratio,
    )
    .map_err(|e| AppError::Validation(e.to_string()))?;

    #[derive(Serialize)]
    struct MetricsFile<'a> {
        k: usize,
        stratified: bool,
        undersample_ratio: Option<f64>,
        pooled: &'a billprep_core::analytics::EvalMetrics,
        folds: &'a [billprep_core::analytics::EvalMetrics],
    }
    let metrics_path = ctx.out("metrics.json");
    commit(&metrics_path, |p| {
        csvio::write_json(
            p,
            &MetricsFile {
                k: analytics.k_folds,
                stratified: analytics.stratified,
                undersample_ratio: analytics.undersample_ratio,
                pooled: &outcome.pooled,
                folds: &outcome.per_fold,
            },
        )
    })?;

    let mut s = summary("evaluate", started);
    s.counts.insert("vectors".into(), set.rows.len() as u64);
    s.counts.insert(
        "positives".into(),
        set.rows.iter().filter(|r| r.churn == 1).count() as u64,
    );
    s.outputs = vec![metrics_path.display().to_string()];
    Ok(s)
}

pub fn stage_correlate(ctx: &Ctx) -> StageResult {
    let started = Instant::now();
    let features_path = ctx.out("features.csv");
    require_file(&features_path, "features file")?;

    let set = csvio::read_features(&features_path)?;
    let entries = correlation_report(&set).map_err(|e| AppError::Validation(e.to_string()))?;
    let path = ctx.out("correlations.csv");
    commit(&path, |p| csvio::write_correlations(p, &entries))?;

    let mut s = summary("correlate", started);
    s.counts.insert("features".into(), entries.len() as u64);
    s.outputs = vec![path.display().to_string()];
    Ok(s)
}

pub fn stage_synth(ctx: &Ctx, synth_config: &SynthConfig) -> StageResult {
    let started = Instant::now();
    ensure_out_dir(ctx)?;

    let corpus_dir = ctx.out("corpus");
    let truth = synthgen::generate_corpus(synth_config, &corpus_dir).map_err(|e| match e {
        synthgen::SynthError::BadConfig(m) => AppError::Validation(m),
        synthgen::SynthError::Io { .. } => AppError::Io(e.to_string()),
    })?;
    synthgen::write_truth(&truth, &ctx.out("truth"))?;
    std::fs::write(ctx.out("mapping.csv"), synthgen::default_mapping_text())
        .map_err(|e| AppError::Io(format!("writing mapping.csv: {e}")))?;
    commit(&ctx.out("synth.json"), |p| csvio::write_json(p, synth_config))?;

    let mut s = summary("synth", started);
    s.counts.insert("bills".into(), truth.bill_count as u64);
    s.counts.insert("pods".into(), truth.tables.pods.len() as u64);
    s.counts.insert("users".into(), truth.tables.users.len() as u64);
    s.counts.insert("vectors".into(), truth.features.rows.len() as u64);
    s.outputs = vec![
        corpus_dir.display().to_string(),
        ctx.out("truth").display().to_string(),
        ctx.out("mapping.csv").display().to_string(),
    ];
    Ok(s)
}

/// Run the enabled stages in pipeline order.
pub fn run_pipeline(ctx: &mut Ctx) -> Result<(), AppError> {
    let toggles = ctx.config.stages.clone();
    type Stage = (&'static str, bool, fn(&Ctx) -> StageResult);
    let stages: Vec<Stage> = vec![
        ("extract", toggles.extract, stage_extract),
        ("clean", toggles.clean, stage_clean),
        ("fuse", toggles.fuse, stage_fuse),
        ("features", toggles.features, stage_features),
        ("train", toggles.train, stage_train),
        ("evaluate", toggles.evaluate, stage_evaluate),
        ("correlate", toggles.correlate, stage_correlate),
    ];
    for (name, enabled, stage) in stages {
        if !enabled {
            continue;
        }
        let s = stage(ctx)?;
        eprintln!("{name}: {} ms", s.millis);
        ctx.report.stages.push(s);
    }
    Ok(())
}
