//! The ECM driver: iteration, convergence, restarts and result assembly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ComponentFamily, ModelConfig, ModelKind};
use super::init::initialize_with;
use super::model::{ExpertParams, GatingState, Posteriors};
use super::steps::{
    cm_step1_with, cm_step2_eta, curve_estimator, e_step, residual_matrix, GatingUpdater,
};
use crate::error::{Error, Result};
use crate::gating::CurveEstimator;
use crate::regression::Dataset;
use crate::selection::{bic, degrees_of_freedom, DegreesOfFreedom};

/// Whether a contaminated component's `α̂` or `η̂` ended on a clamp, which
/// signals that the component is effectively Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryStatus {
    pub alpha_at_upper: bool,
    pub alpha_at_lower: bool,
    pub eta_at_lower: bool,
    pub eta_at_upper: bool,
}

/// Outcome of one restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub attempt: usize,
    pub loglik: Option<f64>,
    pub n_iter: usize,
    pub converged: bool,
    /// Largest `|Σ_k z_ik − 1|` over the attempt's E-steps.
    pub max_row_sum_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub n: usize,
    pub p: usize,
    pub params: ExpertParams,
    pub gating: GatingState,
    pub posteriors: Posteriors,
    pub loglik: f64,
    /// Observed log-likelihood at every E-step of the winning run.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub n_iter: usize,
    pub df: DegreesOfFreedom,
    pub bic: f64,
    pub best_attempt: usize,
    pub attempts: Vec<AttemptSummary>,
    /// Per component; empty for the Gaussian family.
    pub boundary: Vec<BoundaryStatus>,
    /// Largest `|Σ_k z_ik − 1|` seen on any E-step of the winning run.
    pub max_row_sum_error: f64,
    /// Observations whose density underflowed in every component at the
    /// final E-step.
    pub underflow_rows: usize,
}

impl FitResult {
    /// Fitted mixing proportions at the observations.
    pub fn mixing_at_data(&self, d: &Dataset) -> Result<nalgebra::DMatrix<f64>> {
        self.gating.log_weights(d).map(|m| m.map(f64::exp))
    }
}

struct Run {
    params: ExpertParams,
    gating: GatingState,
    posteriors: Posteriors,
    trace: Vec<f64>,
    converged: bool,
    n_iter: usize,
    max_row_sum_error: f64,
    underflow_rows: usize,
}

fn run_ecm(
    d: &Dataset,
    cfg: &ModelConfig,
    curves: Option<&CurveEstimator>,
    mut params: ExpertParams,
    mut gating: GatingState,
) -> Result<Run> {
    let contaminated = cfg.family == ComponentFamily::Contaminated;
    let mut e = e_step(d, &params, &gating)?;
    let mut trace = vec![e.loglik];
    let mut max_rse = e.posteriors.max_row_sum_error();
    let mut converged = false;
    let mut n_iter = 0;
    if !e.loglik.is_finite() {
        return Err(Error::Numeric(
            "initial log-likelihood is not finite".into(),
        ));
    }
    while n_iter < cfg.max_iter {
        let logistic_prev = match &gating {
            GatingState::Logistic { model } => Some(model.clone()),
            _ => None,
        };
        let updater = GatingUpdater {
            kind: cfg.gating,
            logistic_prev: logistic_prev.as_ref(),
            curves,
        };
        let (mut next, next_gating) =
            cm_step1_with(d, &e.posteriors, params.eta.as_deref(), cfg, &updater)?;
        if contaminated {
            let r = residual_matrix(d, &next);
            next.eta = Some(cm_step2_eta(
                &e.posteriors,
                &r,
                &next.sigma2,
                cfg.eta_bounds,
            ));
        }
        params = next;
        gating = next_gating;
        let prev = e.loglik;
        e = e_step(d, &params, &gating)?;
        n_iter += 1;
        if !e.loglik.is_finite() {
            return Err(Error::Numeric(format!(
                "log-likelihood became non-finite at iteration {n_iter}"
            )));
        }
        trace.push(e.loglik);
        max_rse = max_rse.max(e.posteriors.max_row_sum_error());
        if (e.loglik - prev).abs() < cfg.tol * prev.abs() {
            converged = true;
            break;
        }
    }
    Ok(Run {
        params,
        gating,
        posteriors: e.posteriors,
        trace,
        converged,
        n_iter,
        max_row_sum_error: max_rse,
        underflow_rows: e.underflow_rows,
    })
}

fn boundary_status(params: &ExpertParams, cfg: &ModelConfig) -> Vec<BoundaryStatus> {
    match (&params.alpha, &params.eta) {
        (Some(a), Some(e)) => a
            .iter()
            .zip(e)
            .map(|(&a, &e)| BoundaryStatus {
                alpha_at_upper: a >= cfg.alpha_bounds.1,
                alpha_at_lower: a <= cfg.alpha_bounds.0,
                eta_at_lower: e <= cfg.eta_bounds.0,
                eta_at_upper: e >= cfg.eta_bounds.1,
            })
            .collect(),
        _ => Vec::new(),
    }
}

fn assemble(
    d: &Dataset,
    cfg: &ModelConfig,
    run: Run,
    best_attempt: usize,
    attempts: Vec<AttemptSummary>,
) -> Result<FitResult> {
    let (lo, hi) = d.t_range();
    let df = degrees_of_freedom(cfg, d.p(), hi - lo)?;
    let loglik = *run.trace.last().expect("trace holds the initial value");
    Ok(FitResult {
        kind: cfg.kind(),
        config: cfg.clone(),
        n: d.n(),
        p: d.p(),
        boundary: boundary_status(&run.params, cfg),
        params: run.params,
        gating: run.gating,
        posteriors: run.posteriors,
        loglik,
        loglik_trace: run.trace,
        converged: run.converged,
        n_iter: run.n_iter,
        bic: bic(loglik, df.total, d.n())?,
        df,
        best_attempt,
        attempts,
        max_row_sum_error: run.max_row_sum_error,
        underflow_rows: run.underflow_rows,
    })
}

fn summary(attempt: usize, run: &Result<Run>) -> AttemptSummary {
    match run {
        Ok(r) => AttemptSummary {
            attempt,
            loglik: r.trace.last().copied(),
            n_iter: r.n_iter,
            converged: r.converged,
            max_row_sum_error: Some(r.max_row_sum_error),
            error: None,
        },
        Err(e) => AttemptSummary {
            attempt,
            loglik: None,
            n_iter: 0,
            converged: false,
            max_row_sum_error: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs the ECM iteration once from the given starting values.
pub fn fit_from_start(
    d: &Dataset,
    cfg: &ModelConfig,
    params: ExpertParams,
    gating: GatingState,
) -> Result<FitResult> {
    cfg.validate()?;
    if params.k() != cfg.k {
        return Err(Error::Usage(format!(
            "start has {} components, config has {}",
            params.k(),
            cfg.k
        )));
    }
    if params.is_contaminated() != (cfg.family == ComponentFamily::Contaminated) {
        return Err(Error::Usage(
            "starting parameters do not match the component family".into(),
        ));
    }
    let curves = curve_estimator(d, cfg)?;
    let run = run_ecm(d, cfg, curves.as_ref(), params, gating);
    let attempts = vec![summary(0, &run)];
    match run {
        Ok(r) => assemble(d, cfg, r, 0, attempts),
        Err(e) => Err(Error::FitFailure {
            attempts: 1,
            diagnostics: vec![e.to_string()],
        }),
    }
}

/// Fits the configured model from `cfg.n_restarts` starts and keeps the one
/// with the highest final observed log-likelihood (lowest attempt index on
/// ties).
pub fn fit(d: &Dataset, cfg: &ModelConfig) -> Result<FitResult> {
    cfg.validate()?;
    let curves = curve_estimator(d, cfg)?;
    let runs: Vec<Result<Run>> = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|attempt| {
            let (params, gating) = initialize_with(d, cfg, attempt, curves.as_ref())?;
            run_ecm(d, cfg, curves.as_ref(), params, gating)
        })
        .collect();
    let attempts: Vec<AttemptSummary> = runs
        .iter()
        .enumerate()
        .map(|(a, r)| summary(a, r))
        .collect();
    let mut best: Option<(usize, Run)> = None;
    for (attempt, run) in runs.into_iter().enumerate() {
        match run {
            Ok(r) => {
                let ll = *r.trace.last().expect("non-empty trace");
                let better = best.as_ref().map_or(true, |(_, b)| {
                    ll > *b.trace.last().expect("non-empty trace")
                });
                if better {
                    best = Some((attempt, r));
                }
            }
            Err(e) => log::debug!("attempt {attempt} failed: {e}"),
        }
    }
    match best {
        Some((attempt, run)) => assemble(d, cfg, run, attempt, attempts),
        None => Err(Error::FitFailure {
            attempts: cfg.n_restarts,
            diagnostics: attempts
                .iter()
                .map(|a| {
                    format!(
                        "attempt {}: {}",
                        a.attempt,
                        a.error.as_deref().unwrap_or("unknown")
                    )
                })
                .collect(),
        }),
    }
}
