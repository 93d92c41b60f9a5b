//! MAP cluster assignment followed by within-cluster outlier flags.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{FitResult, Posteriors};

pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    /// Zero-based component index per observation.
    pub labels: Vec<usize>,
    pub outlier: Vec<bool>,
    pub zhat: DMatrix<f64>,
    pub vhat: DMatrix<f64>,
    pub threshold: f64,
}

impl ClusterReport {
    pub fn n_outliers(&self) -> usize {
        self.outlier.iter().filter(|&&o| o).count()
    }

    /// Observation count per component.
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.zhat.ncols()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Index of the largest entry, lowest index on ties.
fn map_label(row: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (k, v) in row.enumerate() {
        if v > best_v {
            best = k;
            best_v = v;
        }
    }
    best
}

/// Classifies from posteriors directly. Outliers are only flagged when
/// `contaminated` is set.
pub fn classify_posteriors(
    post: &Posteriors,
    contaminated: bool,
    threshold: f64,
) -> Result<ClusterReport> {
    if !(threshold.is_finite() && (0.0..=1.0).contains(&threshold)) {
        return Err(Error::Usage(format!(
            "outlier threshold must lie in [0, 1], got {threshold}"
        )));
    }
    if post.v.shape() != post.z.shape() {
        return Err(Error::Usage("Z and V have different shapes".into()));
    }
    let labels: Vec<usize> = post
        .z
        .row_iter()
        .map(|r| map_label(r.iter().copied()))
        .collect();
    let outlier = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| contaminated && post.v[(i, l)] < threshold)
        .collect();
    Ok(ClusterReport {
        labels,
        outlier,
        zhat: post.z.clone(),
        vhat: post.v.clone(),
        threshold,
    })
}

/// Two-stage classification of a fitted model.
pub fn classify(fit: &FitResult, threshold: f64) -> Result<ClusterReport> {
    classify_posteriors(&fit.posteriors, fit.params.is_contaminated(), threshold)
}
