//! Binary logistic regression fit by full-batch gradient descent with
//! Armijo backtracking. Features are z-scored on training statistics; the
//! intercept is not regularized.

use super::features::AnalyticsError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// Initial step size for the backtracking line search.
    pub initial_step: f64,
    pub max_iters: usize,
    /// Convergence threshold on the gradient's infinity norm.
    pub tolerance: f64,
    /// L2 penalty on the non-intercept weights.
    pub l2: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            initial_step: 1.0,
            max_iters: 20_000,
            tolerance: 1e-8,
            l2: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// `weights[0]` is the intercept over standardized features.
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub final_loss: f64,
    pub iterations: usize,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean log-loss plus L2 penalty over rows that already carry the leading
/// intercept column.
pub fn logistic_loss(weights: &[f64], rows: &[Vec<f64>], labels: &[u8], l2: f64) -> f64 {
    let n = rows.len() as f64;
    let mut loss = 0.0;
    for (row, &label) in rows.iter().zip(labels) {
        let z: f64 = row.iter().zip(weights).map(|(x, w)| x * w).sum();
        let y = label as f64;
        // log(1 + e^-|z|) form is stable for large |z|
        loss += (1.0 + (-z.abs()).exp()).ln() + if z >= 0.0 { (1.0 - y) * z } else { -y * z };
    }
    let penalty: f64 = weights[1..].iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    loss / n + penalty
}

/// Analytic gradient of [`logistic_loss`].
pub fn logistic_grad(weights: &[f64], rows: &[Vec<f64>], labels: &[u8], l2: f64) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut grad = vec![0.0; weights.len()];
    for (row, &label) in rows.iter().zip(labels) {
        let z: f64 = row.iter().zip(weights).map(|(x, w)| x * w).sum();
        let err = sigmoid(z) - label as f64;
        for (g, x) in grad.iter_mut().zip(row) {
            *g += err * x;
        }
    }
    for g in grad.iter_mut() {
        *g /= n;
    }
    for (g, w) in grad[1..].iter_mut().zip(&weights[1..]) {
        *g += l2 * w;
    }
    grad
}

/// Standardize columns and prepend the intercept column.
pub fn standardized_design(
    columns: &[Vec<f64>],
    means: &[f64],
    stds: &[f64],
) -> Vec<Vec<f64>> {
    let n = columns.first().map_or(0, Vec::len);
    (0..n)
        .map(|r| {
            let mut row = Vec::with_capacity(columns.len() + 1);
            row.push(1.0);
            for (c, col) in columns.iter().enumerate() {
                row.push((col[r] - means[c]) / stds[c]);
            }
            row
        })
        .collect()
}

pub fn train_logistic_regression(
    columns: &[Vec<f64>],
    labels: &[u8],
    params: &LogisticParams,
) -> Result<LogisticModel, AnalyticsError> {
    if columns.is_empty() || labels.is_empty() {
        return Err(AnalyticsError::EmptyTrainingSet);
    }
    for c in columns {
        if c.len() != labels.len() {
            return Err(AnalyticsError::LengthMismatch(c.len(), labels.len()));
        }
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(AnalyticsError::SingleClass);
    }

    let n = labels.len() as f64;
    let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let stds: Vec<f64> = columns
        .iter()
        .zip(&means)
        .map(|(c, m)| {
            let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            // constant columns contribute zero after centering
            if var == 0.0 {
                1.0
            } else {
                var.sqrt()
            }
        })
        .collect();
    let rows = standardized_design(columns, &means, &stds);

    let mut weights = vec![0.0; columns.len() + 1];
    let mut loss = logistic_loss(&weights, &rows, labels, params.l2);
    for iteration in 0..params.max_iters {
        let grad = logistic_grad(&weights, &rows, labels, params.l2);
        let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm <= params.tolerance {
            return Ok(LogisticModel {
                weights,
                means,
                stds,
                final_loss: loss,
                iterations: iteration,
            });
        }
        let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
        let mut step = params.initial_step;
        loop {
            let candidate: Vec<f64> = weights
                .iter()
                .zip(&grad)
                .map(|(w, g)| w - step * g)
                .collect();
            let candidate_loss = logistic_loss(&candidate, &rows, labels, params.l2);
            if candidate_loss <= loss - 0.5 * step * grad_sq || step < 1e-18 {
                weights = candidate;
                loss = candidate_loss;
                break;
            }
            step *= 0.5;
        }
    }
    Err(AnalyticsError::NonConvergence {
        iters: params.max_iters,
        loss,
    })
}

impl LogisticModel {
    pub fn predict(&self, raw_row: &[f64]) -> u8 {
        let mut z = self.weights[0];
        for (c, x) in raw_row.iter().enumerate() {
            z += self.weights[c + 1] * (x - self.means[c]) / self.stds[c];
        }
        u8::from(sigmoid(z) >= 0.5)
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Vec<u8> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}
