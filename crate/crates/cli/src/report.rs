//! Serializable views of fits with a stable field order.

use nalgebra::DMatrix;
use serde::Serialize;

use cgmix::estimators::{AttemptSummary, BoundaryStatus};
use cgmix::{ClusterReport, DegreesOfFreedom, FitResult, GatingState, ModelKind};

use crate::output::SCHEMA_VERSION;

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Serialize)]
pub struct ParamsView {
    /// One row `(β_k0, β_k1, …)` per component.
    pub beta: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub eta: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GatingView {
    Constant {
        weights: Vec<f64>,
    },
    /// Rows `γ_k` for the first `K − 1` components; the last is zero.
    Logistic {
        gamma: Vec<Vec<f64>>,
    },
    Nonparametric {
        bandwidth: f64,
        grid: Vec<f64>,
        /// `grid.len() × K` curve values.
        values: Vec<Vec<f64>>,
        boundary_fallbacks: usize,
    },
}

impl GatingView {
    pub fn new(g: &GatingState) -> Self {
        match g {
            GatingState::Constant { weights } => GatingView::Constant {
                weights: weights.clone(),
            },
            GatingState::Logistic { model } => GatingView::Logistic {
                gamma: rows(model.gamma()),
            },
            GatingState::Nonparametric { curves } => GatingView::Nonparametric {
                bandwidth: curves.kernel.bandwidth(),
                grid: curves.grid.points().to_vec(),
                values: rows(&curves.values),
                boundary_fallbacks: curves.boundary_fallbacks,
            },
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ClusterView {
    pub threshold: f64,
    pub sizes: Vec<usize>,
    pub n_outliers: usize,
    /// One-based component label per observation.
    pub labels: Vec<usize>,
    pub outlier: Vec<bool>,
}

impl ClusterView {
    pub fn new(c: &ClusterReport) -> Self {
        Self {
            threshold: c.threshold,
            sizes: c.cluster_sizes(),
            n_outliers: c.n_outliers(),
            labels: c.labels.iter().map(|l| l + 1).collect(),
            outlier: c.outlier.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub model: ModelKind,
    pub k: usize,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub restarts: usize,
    pub loglik: f64,
    pub df: DegreesOfFreedom,
    pub bic: f64,
    pub converged: bool,
    pub n_iter: usize,
    pub best_attempt: usize,
    pub max_row_sum_error: f64,
    pub underflow_rows: usize,
    pub params: ParamsView,
    pub boundary: Vec<BoundaryStatus>,
    pub gating: GatingView,
    pub attempts: Vec<AttemptSummary>,
    pub clusters: ClusterView,
}

impl FitReport {
    pub fn new(f: &FitResult, clusters: &ClusterReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            model: f.kind,
            k: f.config.k,
            n: f.n,
            p: f.p,
            seed: f.config.seed,
            restarts: f.config.n_restarts,
            loglik: f.loglik,
            df: f.df,
            bic: f.bic,
            converged: f.converged,
            n_iter: f.n_iter,
            best_attempt: f.best_attempt,
            max_row_sum_error: f.max_row_sum_error,
            underflow_rows: f.underflow_rows,
            params: ParamsView {
                beta: rows(&f.params.beta),
                sigma2: f.params.sigma2.clone(),
                alpha: f.params.alpha.clone(),
                eta: f.params.eta.clone(),
            },
            boundary: f.boundary.clone(),
            gating: GatingView::new(&f.gating),
            attempts: f.attempts.clone(),
            clusters: ClusterView::new(clusters),
        }
    }
}
