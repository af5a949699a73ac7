//! Feature/target correlation analysis.

use super::features::{AnalyticsError, FeatureSet};
use serde::Serialize;

/// Sample Pearson correlation coefficient, computed with Welford-style
/// running moments (single pass).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalyticsError::TooFewSamples {
            need: 2,
            got: x.len(),
        });
    }
    let mut mean_x = 0.0;
    let mut mean_y = 0.0;
    let mut m2_x = 0.0;
    let mut m2_y = 0.0;
    let mut co = 0.0;
    for (i, (&xv, &yv)) in x.iter().zip(y).enumerate() {
        let n = (i + 1) as f64;
        let dx = xv - mean_x;
        mean_x += dx / n;
        let dy = yv - mean_y;
        mean_y += dy / n;
        // uses the pre-update x-delta and post-update y-mean
        m2_x += dx * (xv - mean_x);
        m2_y += dy * (yv - mean_y);
        co += dx * (yv - mean_y);
    }
    if m2_x == 0.0 || m2_y == 0.0 {
        return Err(AnalyticsError::ZeroVariance);
    }
    Ok(co / (m2_x.sqrt() * m2_y.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationEntry {
    pub feature: String,
    /// `None` when the feature column is constant.
    pub r: Option<f64>,
}

/// Pearson r of every feature column against the churn label, sorted by
/// |r| descending; constant columns are reported as undefined rather than
/// silently dropped.
pub fn correlation_report(set: &FeatureSet) -> Result<Vec<CorrelationEntry>, AnalyticsError> {
    if set.rows.len() < 2 {
        return Err(AnalyticsError::TooFewSamples {
            need: 2,
            got: set.rows.len(),
        });
    }
    let (cols, labels) = set.matrix();
    let churn: Vec<f64> = labels.iter().map(|&c| c as f64).collect();
    let mut entries: Vec<CorrelationEntry> = set
        .columns
        .iter()
        .zip(&cols)
        .map(|(column, values)| CorrelationEntry {
            feature: column.name.clone(),
            r: match pearson(values, &churn) {
                Ok(r) => Some(r),
                Err(AnalyticsError::ZeroVariance) => None,
                Err(_) => None,
            },
        })
        .collect();
    entries.sort_by(|a, b| {
        let ka = a.r.map(f64::abs);
        let kb = b.r.map(f64::abs);
        kb.partial_cmp(&ka)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    Ok(entries)
}
