//! Churn-prediction analytics: feature building, correlation analysis,
//! classifiers, and cross-validated evaluation.

pub mod eval;
pub mod features;
pub mod forest;
pub mod logistic;
pub mod stats;

pub use eval::{
    cross_validate, make_folds, undersample_majority, CvOutcome, EvalMetrics, ModelSpec,
};
pub use features::{
    build_feature_vectors, encode_categorical, feature_schema, label_churn, AnalyticsError,
    ColumnKind, EncodingTable, EncodingTables, FeatureBuild, FeatureCell, FeatureColumn,
    FeatureRow, FeatureSet,
};
pub use forest::{train_random_forest, DecisionTree, ForestParams, RandomForest, TreeNode};
pub use logistic::{train_logistic_regression, LogisticModel, LogisticParams};
pub use stats::{correlation_report, pearson, CorrelationEntry};
