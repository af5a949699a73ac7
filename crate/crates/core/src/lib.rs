//! Batch preparation of per-bill JSON corpora into clean relational tables
//! and churn features.
//!
//! The pipeline runs in four stages, each a pure function of its inputs:
//!
//! 1. [`extract`] — walk the month folders, resolve every mapped path,
//!    emit the long-format observation table keyed by file path.
//! 2. [`clean`] — type-directed cleaning of display-formatted values
//!    (units, separators, spelled-out dates) plus salted hashing.
//! 3. [`fuse`] — pivot to one record per bill, split into Bill/POD/User
//!    tables, resolve conflicts with the most recent non-null value.
//! 4. [`analytics`] — per-(POD, offer) feature vectors with churn labels,
//!    correlation analysis, random forest / logistic regression under
//!    stratified cross-validation.
//!
//! [`mapping`] defines the file that drives it all; [`synthgen`] produces
//! deterministic synthetic corpora with exact ground truth for testing.

pub mod analytics;
pub mod clean;
pub mod csvio;
pub mod extract;
pub mod fuse;
pub mod mapping;
pub mod rng;
pub mod sqldump;
pub mod synthgen;
pub mod value;

pub use value::{CivilDate, CleanValue, Decimal2};
