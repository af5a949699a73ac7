//! Shared fixtures for the benchmarks.

use billprep_core::analytics::FeatureSet;
use billprep_core::synthgen::{generate_vector_set, SynthConfig, VectorSetConfig};

/// A mid-sized generator config for corpus-level benchmarks.
pub fn bench_corpus_config() -> SynthConfig {
    SynthConfig {
        users: 400,
        churn_prevalence: 0.05,
        inconsistency_probability: 0.2,
        seed: 12,
        ..Default::default()
    }
}

/// A labeled vector set for classifier benchmarks.
pub fn bench_vector_set(vectors: usize) -> FeatureSet {
    generate_vector_set(&VectorSetConfig {
        vectors,
        churn_prevalence: 0.05,
        seed: 12,
        ..Default::default()
    })
}
