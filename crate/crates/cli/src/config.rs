//! Pipeline configuration: a JSON file mirroring these structs, with every
//! field optional (serde defaults) and command-line flags overriding the
//! file.

use billprep_core::analytics::{ForestParams, LogisticParams};
use billprep_core::mapping::MonthLocale;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus_root: PathBuf,
    pub mapping_file: PathBuf,
    pub out_dir: PathBuf,
    pub salt: String,
    pub month_locale: MonthLocale,
    /// 0 means the rayon default (one thread per core).
    pub workers: usize,
    pub sql_dump: bool,
    pub analytics: AnalyticsConfig,
    pub stages: StageToggles,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_root: PathBuf::from("corpus"),
            mapping_file: PathBuf::from("mapping.csv"),
            out_dir: PathBuf::from("out"),
            salt: String::new(),
            month_locale: MonthLocale::English,
            workers: 0,
            sql_dump: false,
            analytics: AnalyticsConfig::default(),
            stages: StageToggles::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    pub k_folds: usize,
    pub stratified: bool,
    pub undersample_ratio: Option<f64>,
    /// Mandatory for `train` and `evaluate`; settable here or via `--seed`.
    pub seed: Option<u64>,
    pub model: ModelChoice,
    pub forest: ForestConfig,
    pub logistic: LogisticParams,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        AnalyticsConfig {
            k_folds: 5,
            stratified: true,
            undersample_ratio: None,
            seed: None,
            model: ModelChoice::Forest,
            forest: ForestConfig::default(),
            logistic: LogisticParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Forest,
    Logistic,
}

/// Forest knobs without the seed (the seed comes from `analytics.seed`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        let p = ForestParams::default();
        ForestConfig {
            trees: p.trees,
            max_depth: p.max_depth,
            min_samples_leaf: p.min_samples_leaf,
            features_per_split: p.features_per_split,
            bootstrap: p.bootstrap,
        }
    }
}

impl ForestConfig {
    pub fn params(&self, seed: u64) -> ForestParams {
        ForestParams {
            trees: self.trees,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            features_per_split: self.features_per_split,
            bootstrap: self.bootstrap,
            seed,
        }
    }
}

/// Which stages `pipeline` runs; disabled stages expect their inputs to
/// exist from an earlier run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub extract: bool,
    pub clean: bool,
    pub fuse: bool,
    pub features: bool,
    pub train: bool,
    pub evaluate: bool,
    pub correlate: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles {
            extract: true,
            clean: true,
            fuse: true,
            features: true,
            train: true,
            evaluate: true,
            correlate: true,
        }
    }
}
