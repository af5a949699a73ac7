mod config;
mod stages;

use clap::{Parser, Subcommand};
use config::{ModelChoice, PipelineConfig};
use stages::{AppError, Ctx};
use std::path::PathBuf;

/// Batch preparation of per-bill JSON corpora: mapping-driven extraction,
/// type-directed cleaning, entity fusion, and churn analytics.
#[derive(Parser, Debug)]
#[command(name = "billprep", version, about, max_term_width = 100)]
struct Cli {
    /// JSON pipeline configuration; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (0 = one per core). Outputs are identical for any
    /// worker count.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Master seed for the analytics stages.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Salt for the hashing pseudonymization.
    #[arg(long, global = true)]
    salt: Option<String>,

    /// Month-name locale for date cleaning.
    #[arg(long, global = true, value_parser = ["english", "italian"])]
    locale: Option<String>,

    /// Also emit a CREATE TABLE + INSERT dump of the fused tables.
    #[arg(long, global = true)]
    sql_dump: bool,

    /// Output directory for all stage files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Walk the corpus and emit the long-format observation table.
    Extract {
        /// Corpus root containing the month folders.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Attribute-mapping file.
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Clean raw observations into typed values.
    Clean {
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Pivot, split into Bill/POD/User tables, and fuse conflicts.
    Fuse {
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Build per-(POD, offer) feature vectors with churn labels.
    Features {
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Train a classifier on the full feature table and save the model.
    Train {
        #[arg(long, value_enum)]
        model: Option<ModelChoice>,
    },
    /// Cross-validate a classifier and write metrics.
    Evaluate {
        #[arg(long, value_enum)]
        model: Option<ModelChoice>,
        /// Fold count.
        #[arg(long)]
        k: Option<usize>,
        /// Rebalance training folds by majority undersampling to this
        /// majority:minority ratio (e.g. 1.0).
        #[arg(long)]
        undersample_ratio: Option<f64>,
        /// Disable class-preserving fold construction.
        #[arg(long)]
        no_stratify: bool,
    },
    /// Report Pearson correlation of every feature against churn.
    Correlate,
    /// Generate a synthetic corpus with ground truth under --out.
    Synth {
        /// Generator configuration (JSON); defaults apply when omitted.
        #[arg(long)]
        synth_config: Option<PathBuf>,
    },
    /// Run every enabled stage in order: extract, clean, fuse, features,
    /// train, evaluate, correlate.
    Pipeline,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, AppError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AppError::Validation(format!("config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| AppError::Validation(format!("config {}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(w) = cli.workers {
        config.workers = w;
    }
    if let Some(seed) = cli.seed {
        config.analytics.seed = Some(seed);
    }
    if let Some(salt) = &cli.salt {
        config.salt = salt.clone();
    }
    if let Some(locale) = &cli.locale {
        config.month_locale = match locale.as_str() {
            "italian" => billprep_core::mapping::MonthLocale::Italian,
            _ => billprep_core::mapping::MonthLocale::English,
        };
    }
    if cli.sql_dump {
        config.sql_dump = true;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn apply_command_overrides(cli: &Cli, config: &mut PipelineConfig) {
    match &cli.command {
        Command::Extract { corpus, mapping } => {
            if let Some(c) = corpus {
                config.corpus_root = c.clone();
            }
            if let Some(m) = mapping {
                config.mapping_file = m.clone();
            }
        }
        Command::Clean { mapping }
        | Command::Fuse { mapping }
        | Command::Features { mapping } => {
            if let Some(m) = mapping {
                config.mapping_file = m.clone();
            }
        }
        Command::Train { model: Some(m) } => config.analytics.model = *m,
        Command::Evaluate {
            model,
            k,
            undersample_ratio,
            no_stratify,
        } => {
            if let Some(m) = model {
                config.analytics.model = *m;
            }
            if let Some(k) = k {
                config.analytics.k_folds = *k;
            }
            if undersample_ratio.is_some() {
                config.analytics.undersample_ratio = *undersample_ratio;
            }
            if *no_stratify {
                config.analytics.stratified = false;
            }
        }
        _ => {}
    }
}

fn configure_worker_pool(workers: usize) {
    if workers > 0 {
        // ignore the error: tests may call run() twice in one process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    let mut config = load_config(&cli)?;
    apply_command_overrides(&cli, &mut config);
    configure_worker_pool(config.workers);

    let command_name = match &cli.command {
        Command::Extract { .. } => "extract",
        Command::Clean { .. } => "clean",
        Command::Fuse { .. } => "fuse",
        Command::Features { .. } => "features",
        Command::Train { .. } => "train",
        Command::Evaluate { .. } => "evaluate",
        Command::Correlate => "correlate",
        Command::Synth { .. } => "synth",
        Command::Pipeline => "pipeline",
    };
    let mut ctx = Ctx::new(config, command_name);

    let outcome = match &cli.command {
        Command::Extract { .. } => stages::stage_extract(&ctx).map(|s| ctx.report.stages.push(s)),
        Command::Clean { .. } => stages::stage_clean(&ctx).map(|s| ctx.report.stages.push(s)),
        Command::Fuse { .. } => stages::stage_fuse(&ctx).map(|s| ctx.report.stages.push(s)),
        Command::Features { .. } => stages::stage_features(&ctx).map(|s| ctx.report.stages.push(s)),
        Command::Train { .. } => stages::stage_train(&ctx).map(|s| ctx.report.stages.push(s)),
        Command::Evaluate { .. } => stages::stage_evaluate(&ctx).map(|s| ctx.report.stages.push(s)),
        Command::Correlate => stages::stage_correlate(&ctx).map(|s| ctx.report.stages.push(s)),
        Command::Synth { synth_config } => {
            let mut synth = match synth_config {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| {
                        AppError::Validation(format!("synth config {}: {e}", path.display()))
                    })?;
                    serde_json::from_str(&text).map_err(|e| {
                        AppError::Validation(format!("synth config {}: {e}", path.display()))
                    })?
                }
                None => billprep_core::synthgen::SynthConfig::default(),
            };
            if let Some(seed) = cli.seed {
                synth.seed = seed;
            }
            if let Some(salt) = &cli.salt {
                synth.salt = salt.clone();
            }
            stages::stage_synth(&ctx, &synth).map(|s| ctx.report.stages.push(s))
        }
        Command::Pipeline => stages::run_pipeline(&mut ctx),
    };

    match outcome {
        Ok(()) => {
            ctx.write_report();
            Ok(())
        }
        Err(e) => {
            ctx.report.error = Some(e.to_string());
            ctx.write_report();
            Err(e)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version print to stdout and exit 0; real parse errors
            // print usage and exit 1
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
