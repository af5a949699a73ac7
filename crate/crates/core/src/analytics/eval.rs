//! Stratified cross-validation, rebalancing, and classification metrics.
//!
//! Two different things both get called "stratification" in this domain and
//! they are kept strictly apart here: fold construction that preserves
//! class proportions (always applied when `stratified` is set), and
//! majority undersampling that rebalances *training* folds only —
//! evaluation folds are never resampled.

use super::features::{AnalyticsError, FeatureSet};
use super::forest::{train_random_forest, ForestParams};
use super::logistic::{train_logistic_regression, LogisticParams};
use crate::rng::{derive_seed, Rng};
use serde::{Deserialize, Serialize};

/// Which classifier a cross-validation run trains per fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    Forest(ForestParams),
    Logistic(LogisticParams),
}

/// Confusion-matrix derived metrics. `confusion[actual][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub precision: [f64; 2],
    pub recall: [f64; 2],
    pub f1: [f64; 2],
    pub confusion: [[u64; 2]; 2],
    pub folds: usize,
}

impl EvalMetrics {
    pub fn from_confusion(confusion: [[u64; 2]; 2], folds: usize) -> Self {
        let total: u64 = confusion.iter().flatten().sum();
        let trace = confusion[0][0] + confusion[1][1];
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let mut precision = [0.0; 2];
        let mut recall = [0.0; 2];
        let mut f1 = [0.0; 2];
        for class in 0..2 {
            let tp = confusion[class][class];
            let predicted = confusion[0][class] + confusion[1][class];
            let actual = confusion[class][0] + confusion[class][1];
            precision[class] = ratio(tp, predicted);
            recall[class] = ratio(tp, actual);
            f1[class] = if precision[class] + recall[class] == 0.0 {
                0.0
            } else {
                2.0 * precision[class] * recall[class] / (precision[class] + recall[class])
            };
        }
        EvalMetrics {
            accuracy: ratio(trace, total),
            precision,
            recall,
            f1,
            confusion,
            folds,
        }
    }
}

/// Pooled out-of-fold metrics plus the per-fold breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub pooled: EvalMetrics,
    pub per_fold: Vec<EvalMetrics>,
}

/// Assign each sample to one of `k` folds. Stratified assignment shuffles
/// within each class and deals round-robin, so per-fold class counts stay
/// within one of each other.
pub fn make_folds(
    labels: &[u8],
    k: usize,
    stratified: bool,
    seed: u64,
) -> Result<Vec<usize>, AnalyticsError> {
    if k < 2 {
        return Err(AnalyticsError::BadParams("fold count must be >= 2".into()));
    }
    if labels.len() < k {
        return Err(AnalyticsError::TooFewSamples {
            need: k,
            got: labels.len(),
        });
    }
    let mut assignment = vec![0usize; labels.len()];
    let mut rng = Rng::new(derive_seed(seed, 0xF01D));
    if stratified {
        for class in [0u8, 1u8] {
            let mut members: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|(_, l)| **l == class)
                .map(|(i, _)| i)
                .collect();
            if members.is_empty() {
                continue;
            }
            if members.len() < k {
                return Err(AnalyticsError::StratifiedFoldTooSmall {
                    class,
                    count: members.len(),
                    k,
                });
            }
            rng.shuffle(&mut members);
            for (position, index) in members.into_iter().enumerate() {
                assignment[index] = position % k;
            }
        }
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        rng.shuffle(&mut all);
        for (position, index) in all.into_iter().enumerate() {
            assignment[index] = position % k;
        }
    }
    Ok(assignment)
}

/// Drop majority-class samples (seeded) until majority ≤ ratio × minority.
/// The minority class and the relative order of survivors are untouched.
pub fn undersample_majority(set: &FeatureSet, ratio: f64, seed: u64) -> FeatureSet {
    let labels = set.labels();
    let keep = undersample_indices(&labels, &(0..labels.len()).collect::<Vec<_>>(), ratio, seed);
    set.subset(&keep)
}

fn undersample_indices(labels: &[u8], indices: &[usize], ratio: f64, seed: u64) -> Vec<usize> {
    let ones = indices.iter().filter(|&&i| labels[i] == 1).count();
    let zeros = indices.len() - ones;
    if ones == 0 || zeros == 0 {
        return indices.to_vec();
    }
    let (majority, minority_count, majority_count) = if zeros >= ones {
        (0u8, ones, zeros)
    } else {
        (1u8, zeros, ones)
    };
    let target = ((minority_count as f64) * ratio).floor() as usize;
    if majority_count <= target {
        return indices.to_vec();
    }
    let majority_positions: Vec<usize> = (0..indices.len())
        .filter(|&p| labels[indices[p]] == majority)
        .collect();
    let mut rng = Rng::new(derive_seed(seed, 0xBA1A));
    let chosen = rng.sample_indices(majority_positions.len(), target);
    let mut keep_positions: Vec<usize> = (0..indices.len())
        .filter(|&p| labels[indices[p]] != majority)
        .collect();
    keep_positions.extend(chosen.iter().map(|&c| majority_positions[c]));
    keep_positions.sort_unstable();
    keep_positions.into_iter().map(|p| indices[p]).collect()
}

/// Stratified k-fold cross-validation with pooled out-of-fold metrics.
///
/// `undersample_ratio` rebalances each training fold before fitting; test
/// folds always keep their natural class mix. Per-fold model seeds derive
/// from `seed`, so the outcome is identical for any worker count.
pub fn cross_validate(
    set: &FeatureSet,
    model: &ModelSpec,
    k: usize,
    stratified: bool,
    seed: u64,
    undersample_ratio: Option<f64>,
) -> Result<CvOutcome, AnalyticsError> {
    let labels = set.labels();
    let assignment = make_folds(&labels, k, stratified, seed)?;

    let mut pooled = [[0u64; 2]; 2];
    let mut per_fold = Vec::with_capacity(k);
    for fold in 0..k {
        let train_indices: Vec<usize> = (0..labels.len())
            .filter(|&i| assignment[i] != fold)
            .collect();
        let test_indices: Vec<usize> = (0..labels.len())
            .filter(|&i| assignment[i] == fold)
            .collect();
        let train_indices = match undersample_ratio {
            Some(ratio) => undersample_indices(
                &labels,
                &train_indices,
                ratio,
                derive_seed(seed, 0xD0_0000 + fold as u64),
            ),
            None => train_indices,
        };

        let train = set.subset(&train_indices);
        let (train_cols, train_labels) = train.matrix();
        let fold_seed = derive_seed(seed, 0xF0_0000 + fold as u64);

        let test = set.subset(&test_indices);
        let test_rows: Vec<Vec<f64>> = test
            .rows
            .iter()
            .map(|r| r.values.iter().map(|c| c.to_f64()).collect())
            .collect();
        let predictions = match model {
            ModelSpec::Forest(params) => {
                let params = ForestParams {
                    seed: fold_seed,
                    ..params.clone()
                };
                train_random_forest(&train_cols, &train_labels, &params)?.predict_rows(&test_rows)
            }
            ModelSpec::Logistic(params) => {
                train_logistic_regression(&train_cols, &train_labels, params)?
                    .predict_rows(&test_rows)
            }
        };

        let mut confusion = [[0u64; 2]; 2];
        for (&index, &predicted) in test_indices.iter().zip(&predictions) {
            confusion[labels[index] as usize][predicted as usize] += 1;
        }
        for a in 0..2 {
            for p in 0..2 {
                pooled[a][p] += confusion[a][p];
            }
        }
        per_fold.push(EvalMetrics::from_confusion(confusion, 1));
    }

    Ok(CvOutcome {
        pooled: EvalMetrics::from_confusion(pooled, k),
        per_fold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::features::{ColumnKind, FeatureCell, FeatureColumn, FeatureRow};

    fn toy_set(labels: &[u8], feature: impl Fn(usize) -> f64) -> FeatureSet {
        FeatureSet {
            columns: vec![FeatureColumn {
                name: "x".into(),
                kind: ColumnKind::IntegerValue,
            }],
            rows: labels
                .iter()
                .enumerate()
                .map(|(i, &churn)| FeatureRow {
                    pod_id: format!("P{i:04}"),
                    offer_code: 0,
                    values: vec![FeatureCell::Int(feature(i) as i64)],
                    churn,
                })
                .collect(),
        }
    }

    #[test]
    fn metrics_arithmetic_from_confusion() {
        let m = EvalMetrics::from_confusion([[90, 10], [5, 15]], 1);
        assert!((m.accuracy - 105.0 / 120.0).abs() < 1e-12);
        assert!((m.recall[1] - 0.75).abs() < 1e-12);
        assert!((m.precision[1] - 0.6).abs() < 1e-12);
        assert!((m.recall[0] - 0.9).abs() < 1e-12);
        for class in 0..2 {
            for v in [m.precision[class], m.recall[class], m.f1[class]] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn degenerate_confusions_define_zero_not_nan() {
        let m = EvalMetrics::from_confusion([[10, 0], [2, 0]], 1);
        assert_eq!(m.precision[1], 0.0);
        assert_eq!(m.recall[1], 0.0);
        assert_eq!(m.f1[1], 0.0);
    }

    #[test]
    fn stratified_folds_partition_and_balance() {
        let labels: Vec<u8> = (0..103).map(|i| (i % 7 == 0) as u8).collect();
        let k = 5;
        let assignment = make_folds(&labels, k, true, 99).unwrap();
        assert_eq!(assignment.len(), labels.len());
        let mut per_fold_class = vec![[0usize; 2]; k];
        for (i, &fold) in assignment.iter().enumerate() {
            assert!(fold < k);
            per_fold_class[fold][labels[i] as usize] += 1;
        }
        for class in 0..2 {
            let counts: Vec<usize> = per_fold_class.iter().map(|f| f[class]).collect();
            let min = counts.iter().min().unwrap();
            let max = counts.iter().max().unwrap();
            assert!(max - min <= 1, "class {class}: {counts:?}");
        }
    }

    #[test]
    fn stratified_folds_reject_scarce_classes() {
        let labels = [0, 0, 0, 0, 0, 0, 1, 1, 1];
        assert!(matches!(
            make_folds(&labels, 5, true, 1),
            Err(AnalyticsError::StratifiedFoldTooSmall { class: 1, count: 3, k: 5 })
        ));
    }

    #[test]
    fn undersampling_counts_and_determinism() {
        let mut labels = vec![0u8; 98];
        labels.extend([1u8, 1]);
        let set = toy_set(&labels, |i| i as f64);
        let balanced = undersample_majority(&set, 1.0, 7);
        let kept = balanced.labels();
        assert_eq!(kept.len(), 4);
        assert_eq!(kept.iter().filter(|&&l| l == 1).count(), 2);
        // deterministic across calls
        assert_eq!(balanced, undersample_majority(&set, 1.0, 7));
        // different seed, (almost surely) different survivors
        assert_ne!(balanced, undersample_majority(&set, 1.0, 8));
    }

    #[test]
    fn undersampling_is_a_noop_on_balanced_data() {
        let labels = vec![0, 1, 0, 1, 0, 1];
        let set = toy_set(&labels, |i| i as f64);
        assert_eq!(undersample_majority(&set, 1.0, 7), set);
    }

    #[test]
    fn perfect_classifier_scores_one() {
        // duplicated separable data: every value recurs in every fold
        let labels: Vec<u8> = (0..60).map(|i| (i % 2) as u8).collect();
        let set = toy_set(&labels, |i| if i % 2 == 0 { 0.0 } else { 100.0 } + (i % 3) as f64);
        let outcome = cross_validate(
            &set,
            &ModelSpec::Forest(ForestParams {
                trees: 5,
                seed: 3,
                ..Default::default()
            }),
            5,
            true,
            11,
            None,
        )
        .unwrap();
        assert_eq!(outcome.pooled.accuracy, 1.0);
        assert_eq!(outcome.pooled.recall, [1.0, 1.0]);
        assert_eq!(outcome.per_fold.len(), 5);
    }

    #[test]
    fn cross_validation_is_deterministic() {
        let labels: Vec<u8> = (0..40).map(|i| (i % 5 == 0) as u8).collect();
        let set = toy_set(&labels, |i| ((i * 37) % 17) as f64);
        let model = ModelSpec::Forest(ForestParams {
            trees: 7,
            seed: 5,
            ..Default::default()
        });
        let a = cross_validate(&set, &model, 4, true, 13, Some(1.0)).unwrap();
        let b = cross_validate(&set, &model, 4, true, 13, Some(1.0)).unwrap();
        assert_eq!(a, b);
    }
}
