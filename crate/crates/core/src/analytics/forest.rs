//! Random forest classifier over binary labels, built from scratch.
//!
//! CART-style trees: exact threshold splits on numeric/ordinal features,
//! Gini impurity, optional bootstrap, random feature subsets per split.
//! Split scores compare only class counts and thresholds sit on observed
//! feature values, so predictions are invariant under strictly increasing
//! transforms of any feature; every source of randomness derives from the
//! master seed (one child seed per tree), so training is bit-reproducible
//! for any worker count.

use super::features::AnalyticsError;
use crate::rng::{derive_seed, Rng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` means ⌊√d⌋, clamped to at least 1.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        class: u8,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { class } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub feature_count: usize,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Majority vote over the trees; ties go to class 0.
    pub fn predict(&self, row: &[f64]) -> u8 {
        let ones: usize = self
            .trees
            .iter()
            .map(|t| t.predict(row) as usize)
            .sum();
        u8::from(ones * 2 > self.trees.len())
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Vec<u8> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

/// Train a forest on column-major features and binary labels.
pub fn train_random_forest(
    columns: &[Vec<f64>],
    labels: &[u8],
    params: &ForestParams,
) -> Result<RandomForest, AnalyticsError> {
    if params.trees == 0 {
        return Err(AnalyticsError::BadParams("tree count must be >= 1".into()));
    }
    if params.min_samples_leaf == 0 {
        return Err(AnalyticsError::BadParams("min_samples_leaf must be >= 1".into()));
    }
    let d = columns.len();
    if d == 0 || labels.is_empty() {
        return Err(AnalyticsError::EmptyTrainingSet);
    }
    for c in columns {
        if c.len() != labels.len() {
            return Err(AnalyticsError::LengthMismatch(c.len(), labels.len()));
        }
    }
    if let Some(m) = params.features_per_split {
        if m == 0 || m > d {
            return Err(AnalyticsError::BadParams(format!(
                "features_per_split must be in 1..={d}"
            )));
        }
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(AnalyticsError::SingleClass);
    }

    let m = params
        .features_per_split
        .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1));

    // One child seed per tree, derived up front so the schedule of parallel
    // workers cannot influence any tree's stream.
    let seeds: Vec<u64> = (0..params.trees)
        .map(|i| derive_seed(params.seed, i as u64))
        .collect();
    let trees: Vec<DecisionTree> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rng = Rng::new(seed);
            let n = labels.len();
            let indices: Vec<u32> = if params.bootstrap {
                (0..n).map(|_| rng.next_below(n as u64) as u32).collect()
            } else {
                (0..n as u32).collect()
            };
            grow_tree(columns, labels, indices, m, params, &mut rng)
        })
        .collect();

    Ok(RandomForest {
        params: params.clone(),
        feature_count: d,
        trees,
    })
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    labels: &'a [u8],
    m: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
    nodes: Vec<TreeNode>,
    scratch: Vec<(f64, u8)>,
}

fn grow_tree(
    columns: &[Vec<f64>],
    labels: &[u8],
    indices: Vec<u32>,
    m: usize,
    params: &ForestParams,
    rng: &mut Rng,
) -> DecisionTree {
    let mut builder = TreeBuilder {
        columns,
        labels,
        m,
        min_leaf: params.min_samples_leaf,
        max_depth: params.max_depth,
        nodes: Vec::new(),
        scratch: Vec::new(),
    };
    builder.build(indices, 0, rng);
    DecisionTree {
        nodes: builder.nodes,
    }
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    /// Appends the subtree for `indices` and returns its root node index.
    fn build(&mut self, indices: Vec<u32>, depth: usize, rng: &mut Rng) -> usize {
        let ones = indices.iter().filter(|&&i| self.labels[i as usize] == 1).count();
        let n = indices.len();
        let majority = u8::from(ones * 2 > n);

        let depth_reached = self.max_depth.is_some_and(|d| depth >= d);
        if ones == 0 || ones == n || n < 2 * self.min_leaf || depth_reached {
            self.nodes.push(TreeNode::Leaf { class: majority });
            return self.nodes.len() - 1;
        }

        let parent_gini = gini(n - ones, ones);
        let candidates = rng.sample_indices(self.columns.len(), self.m);
        let mut best: Option<BestSplit> = None;
        for feature in candidates {
            self.scan_feature(feature, &indices, parent_gini, &mut best);
        }

        let Some(split) = best else {
            self.nodes.push(TreeNode::Leaf { class: majority });
            return self.nodes.len() - 1;
        };

        let (left_idx, right_idx): (Vec<u32>, Vec<u32>) = indices
            .into_iter()
            .partition(|&i| self.columns[split.feature][i as usize] <= split.threshold);
        debug_assert!(!left_idx.is_empty() && !right_idx.is_empty());

        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { class: majority }); // placeholder
        let left = self.build(left_idx, depth + 1, rng);
        let right = self.build(right_idx, depth + 1, rng);
        self.nodes[at] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        at
    }

    /// Exact split search over one feature: sort the node's values, walk
    /// distinct-value boundaries, keep the strictly best weighted Gini.
    fn scan_feature(
        &mut self,
        feature: usize,
        indices: &[u32],
        parent_gini: f64,
        best: &mut Option<BestSplit>,
    ) {
        let column = &self.columns[feature];
        self.scratch.clear();
        self.scratch.extend(
            indices
                .iter()
                .map(|&i| (column[i as usize], self.labels[i as usize])),
        );
        self.scratch
            .sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let n = self.scratch.len();
        let total_ones: usize = self.scratch.iter().filter(|(_, l)| *l == 1).count();
        let mut left_n = 0usize;
        let mut left_ones = 0usize;
        let mut i = 0usize;
        while i < n {
            let v = self.scratch[i].0;
            while i < n && self.scratch[i].0 == v {
                left_n += 1;
                left_ones += (self.scratch[i].1 == 1) as usize;
                i += 1;
            }
            if i == n {
                break;
            }
            let right_n = n - left_n;
            if left_n < self.min_leaf || right_n < self.min_leaf {
                continue;
            }
            let right_ones = total_ones - left_ones;
            let weighted = (left_n as f64 * gini(left_n - left_ones, left_ones)
                + right_n as f64 * gini(right_n - right_ones, right_ones))
                / n as f64;
            // A split must strictly reduce impurity and strictly beat the
            // incumbent; "first wins" keeps selection deterministic. The
            // threshold is the left group's greatest value (not a midpoint):
            // `x <= t` then commutes exactly with any strictly increasing
            // transform of the feature, for every input.
            if weighted < parent_gini && best.as_ref().is_none_or(|b| weighted < b.score) {
                *best = Some(BestSplit {
                    score: weighted,
                    feature,
                    threshold: v,
                });
            }
        }
    }
}

fn gini(zeros: usize, ones: usize) -> f64 {
    let n = (zeros + ones) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = zeros as f64 / n;
    let p1 = ones as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn columns_from_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let d = rows[0].len();
        (0..d)
            .map(|c| rows.iter().map(|r| r[c]).collect())
            .collect()
    }

    #[test]
    fn separable_clusters_reach_training_accuracy_one() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            rows.push(vec![i as f64 * 0.1, 5.0 + (i % 3) as f64]);
            labels.push(0);
            rows.push(vec![10.0 + i as f64 * 0.1, (i % 3) as f64]);
            labels.push(1);
        }
        let params = ForestParams {
            trees: 20,
            seed: 42,
            ..Default::default()
        };
        let forest = train_random_forest(&columns_from_rows(&rows), &labels, &params).unwrap();
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(r, &l)| forest.predict(r) == l)
            .count();
        assert_eq!(correct, rows.len());
    }

    #[test]
    fn depth_one_stump_cannot_fit_xor() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ];
        let labels = vec![0, 1, 1, 0];
        let params = ForestParams {
            trees: 1,
            max_depth: Some(1),
            features_per_split: Some(2),
            bootstrap: false,
            seed: 7,
            ..Default::default()
        };
        let forest = train_random_forest(&columns_from_rows(&rows), &labels, &params).unwrap();
        let accuracy = rows
            .iter()
            .zip(&labels)
            .filter(|(r, &l)| forest.predict(r) == l)
            .count() as f64
            / 4.0;

        // independent oracle: exhaustively try every stump
        let mut oracle_best = 0usize;
        for feature in 0..2 {
            for threshold in [-0.5, 0.5, 1.5] {
                for (left_class, right_class) in [(0u8, 1u8), (1, 0), (0, 0), (1, 1)] {
                    let correct = rows
                        .iter()
                        .zip(&labels)
                        .filter(|(r, &l)| {
                            let class = if r[feature] <= threshold { left_class } else { right_class };
                            class == l
                        })
                        .count();
                    oracle_best = oracle_best.max(correct);
                }
            }
        }
        // balanced XOR: an axis-aligned stump cannot beat 2 of 4
        assert_eq!(oracle_best, 2);
        assert!(accuracy <= oracle_best as f64 / 4.0);
        assert!(accuracy <= 0.75);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let mut rng = crate::rng::Rng::new(5);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..4).map(|_| rng.next_f64()).collect())
            .collect();
        let labels: Vec<u8> = (0..60).map(|i| (i % 3 == 0) as u8).collect();
        let cols = columns_from_rows(&rows);
        let params = ForestParams {
            trees: 15,
            seed: 99,
            ..Default::default()
        };
        let a = train_random_forest(&cols, &labels, &params).unwrap();
        let b = train_random_forest(&cols, &labels, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict_rows(&rows), b.predict_rows(&rows));
    }

    #[test]
    fn single_class_training_set_is_an_error() {
        let cols = vec![vec![1.0, 2.0, 3.0]];
        assert!(matches!(
            train_random_forest(&cols, &[0, 0, 0], &ForestParams::default()),
            Err(AnalyticsError::SingleClass)
        ));
    }

    #[test]
    fn monotone_increasing_transform_leaves_predictions_unchanged() {
        let mut rng = crate::rng::Rng::new(31);
        let train_rows: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..3).map(|_| rng.next_f64() * 4.0 - 2.0).collect())
            .collect();
        let labels: Vec<u8> = train_rows
            .iter()
            .map(|r| (r[0] + 0.3 * r[1] > 0.1) as u8)
            .collect();
        let test_rows: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.next_f64() * 4.0 - 2.0).collect())
            .collect();
        let params = ForestParams {
            trees: 12,
            seed: 1234,
            ..Default::default()
        };

        let base = train_random_forest(&columns_from_rows(&train_rows), &labels, &params).unwrap();
        let base_pred: Vec<u8> = test_rows.iter().map(|r| base.predict(r)).collect();

        let transform = |v: f64| v.exp() + v * v * v;
        for feature in 0..3 {
            let mut t_train = train_rows.clone();
            let mut t_test = test_rows.clone();
            for r in t_train.iter_mut() {
                r[feature] = transform(r[feature]);
            }
            for r in t_test.iter_mut() {
                r[feature] = transform(r[feature]);
            }
            let t_forest =
                train_random_forest(&columns_from_rows(&t_train), &labels, &params).unwrap();
            let t_pred: Vec<u8> = t_test.iter().map(|r| t_forest.predict(r)).collect();
            assert_eq!(base_pred, t_pred, "feature {feature}");
        }
    }
}
