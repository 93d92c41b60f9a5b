use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::{log_softmax_gating, softmax_gating, LogisticGating, NonparamGating};
use crate::regression::Dataset;

/// Per-component expert parameters. `alpha` and `eta` are present only for
/// the contaminated family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertParams {
    /// `K × (p+1)`, one row per component.
    pub beta: DMatrix<f64>,
    pub sigma2: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    pub eta: Option<Vec<f64>>,
}

impl ExpertParams {
    pub fn k(&self) -> usize {
        self.sigma2.len()
    }

    pub fn beta_row(&self, k: usize) -> DVector<f64> {
        self.beta.row(k).transpose()
    }

    /// `α_k`, or 1 for the Gaussian family.
    pub fn alpha_or_one(&self, k: usize) -> f64 {
        self.alpha.as_ref().map_or(1.0, |a| a[k])
    }

    /// `η_k`, or 1 for the Gaussian family.
    pub fn eta_or_one(&self, k: usize) -> f64 {
        self.eta.as_ref().map_or(1.0, |e| e[k])
    }

    pub fn is_contaminated(&self) -> bool {
        self.alpha.is_some()
    }

    /// Components reordered so that new component `j` is old `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            beta: self.beta.select_rows(perm),
            sigma2: perm.iter().map(|&j| self.sigma2[j]).collect(),
            alpha: self
                .alpha
                .as_ref()
                .map(|a| perm.iter().map(|&j| a[j]).collect()),
            eta: self
                .eta
                .as_ref()
                .map(|e| perm.iter().map(|&j| e[j]).collect()),
        }
    }

    pub(crate) fn validate(&self, p1: usize) -> Result<()> {
        let k = self.k();
        if self.beta.nrows() != k || self.beta.ncols() != p1 {
            return Err(Error::Usage(format!(
                "beta is {}x{}, expected {k}x{p1}",
                self.beta.nrows(),
                self.beta.ncols()
            )));
        }
        if self.sigma2.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidParameter(
                "component variances must be positive".into(),
            ));
        }
        if let Some(a) = &self.alpha {
            if a.len() != k || a.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                return Err(Error::InvalidParameter("alpha must lie in (0, 1)".into()));
            }
        }
        if let Some(e) = &self.eta {
            if e.len() != k || e.iter().any(|v| !(v.is_finite() && *v > 1.0)) {
                return Err(Error::InvalidParameter("eta must exceed 1".into()));
            }
        }
        if self.alpha.is_some() != self.eta.is_some() {
            return Err(Error::InvalidParameter(
                "alpha and eta must be given together".into(),
            ));
        }
        Ok(())
    }
}

/// Component responsibilities `Z` and non-outlier probabilities `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posteriors {
    pub z: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl Posteriors {
    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }

    /// Largest `|Σ_k z_ik − 1|` over rows.
    pub fn max_row_sum_error(&self) -> f64 {
        self.z
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Fitted mixing proportions for any of the three gating kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GatingState {
    Constant { weights: Vec<f64> },
    Logistic { model: LogisticGating },
    Nonparametric { curves: NonparamGating },
}

impl GatingState {
    pub fn k(&self) -> usize {
        match self {
            GatingState::Constant { weights } => weights.len(),
            GatingState::Logistic { model } => model.k(),
            GatingState::Nonparametric { curves } => curves.k(),
        }
    }

    /// `n × K` matrix of `ln π_k` at the observations.
    pub fn log_weights(&self, d: &Dataset) -> Result<DMatrix<f64>> {
        match self {
            GatingState::Constant { weights } => {
                let logs: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
                Ok(DMatrix::from_fn(d.n(), weights.len(), |_, k| logs[k]))
            }
            GatingState::Logistic { model } => log_softmax_gating(&d.gating_design(), model),
            GatingState::Nonparametric { curves } => {
                if curves.at_data.nrows() != d.n() {
                    return Err(Error::Usage(format!(
                        "gating curves were fitted to {} observations, dataset has {}",
                        curves.at_data.nrows(),
                        d.n()
                    )));
                }
                Ok(curves.at_data.map(f64::ln))
            }
        }
    }

    /// `π_k(t)` at arbitrary gating covariate values.
    pub fn weights_at(&self, ts: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            GatingState::Constant { weights } => {
                Ok(DMatrix::from_fn(ts.len(), weights.len(), |_, k| weights[k]))
            }
            GatingState::Logistic { model } => {
                let t = DMatrix::from_fn(ts.len(), 2, |i, j| if j == 0 { 1.0 } else { ts[i] });
                softmax_gating(&t, model)
            }
            GatingState::Nonparametric { curves } => Ok(curves.interpolate(ts)),
        }
    }

    /// Components reordered so that new component `j` is old `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        match self {
            GatingState::Constant { weights } => GatingState::Constant {
                weights: perm.iter().map(|&j| weights[j]).collect(),
            },
            GatingState::Logistic { model } => {
                // Re-express relative to the new reference component.
                let k = model.k();
                let g = model.gamma();
                let full = |j: usize| -> Vec<f64> {
                    if j == k - 1 {
                        vec![0.0; g.ncols()]
                    } else {
                        g.row(j).iter().copied().collect()
                    }
                };
                let reference = full(perm[k - 1]);
                let gamma =
                    DMatrix::from_fn(k - 1, g.ncols(), |r, c| full(perm[r])[c] - reference[c]);
                GatingState::Logistic {
                    model: LogisticGating::new(gamma).expect("finite coefficients"),
                }
            }
            GatingState::Nonparametric { curves } => {
                let mut c = curves.clone();
                c.values = curves.values.select_columns(perm);
                c.at_data = curves.at_data.select_columns(perm);
                GatingState::Nonparametric { curves: c }
            }
        }
    }
}
