//! Starting values for the ECM iteration.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::config::{ComponentFamily, GatingKind, ModelConfig};
use super::model::{ExpertParams, GatingState, Posteriors};
use super::steps::{cm_step1_with, curve_estimator, default_grid, GatingUpdater};
use crate::error::{Error, Result};
use crate::gating::{CurveEstimator, LogisticGating, NonparamGating};
use crate::regression::{weighted_least_squares, Dataset, WeightVector};

pub const INIT_ALPHA: f64 = 0.95;
pub const INIT_ETA: f64 = 20.0;

/// Random number stream for one restart: the config seed selects the
/// generator and the attempt index selects an independent stream.
pub fn attempt_rng(seed: u64, attempt: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(attempt as u64);
    rng
}

/// Starting parameters and gating for restart `attempt`.
///
/// Attempt 0 splits the pooled OLS residuals into `K` quantile groups and
/// fits each group separately. Later attempts draw soft memberships from a
/// flat Dirichlet and apply one CM-step.
pub fn initialize(
    d: &Dataset,
    cfg: &ModelConfig,
    attempt: usize,
) -> Result<(ExpertParams, GatingState)> {
    cfg.validate()?;
    let curves = curve_estimator(d, cfg)?;
    initialize_with(d, cfg, attempt, curves.as_ref())
}

pub(crate) fn initialize_with(
    d: &Dataset,
    cfg: &ModelConfig,
    attempt: usize,
    curves: Option<&CurveEstimator>,
) -> Result<(ExpertParams, GatingState)> {
    if attempt == 0 {
        quantile_start(d, cfg)
    } else {
        random_start(d, cfg, attempt, curves)
    }
}

fn uniform_gating(d: &Dataset, cfg: &ModelConfig) -> Result<GatingState> {
    let k = cfg.k;
    Ok(match cfg.gating {
        GatingKind::Constant => GatingState::Constant {
            weights: vec![1.0 / k as f64; k],
        },
        GatingKind::Logistic => GatingState::Logistic {
            model: LogisticGating::zeros(k, 2),
        },
        GatingKind::Nonparametric => {
            let kernel = cfg.kernel.ok_or_else(|| {
                Error::InvalidParameter("nonparametric gating requires a bandwidth".into())
            })?;
            GatingState::Nonparametric {
                curves: NonparamGating::uniform(default_grid(d, cfg)?, kernel, d.t().as_slice(), k),
            }
        }
    })
}

fn quantile_start(d: &Dataset, cfg: &ModelConfig) -> Result<(ExpertParams, GatingState)> {
    let n = d.n();
    let k = cfg.k;
    let p1 = d.p() + 1;
    let pooled = weighted_least_squares(d.x(), d.y(), &WeightVector::ones(n))?;
    let resid = d.residuals(&pooled);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| resid[a].total_cmp(&resid[b]).then(a.cmp(&b)));

    let mut beta = DMatrix::zeros(k, p1);
    let mut ss = 0.0;
    for c in 0..k {
        let members = &order[c * n / k..(c + 1) * n / k];
        let mut w = DVector::zeros(n);
        for &i in members {
            w[i] = 1.0;
        }
        let b = WeightVector::new(w)
            .and_then(|w| weighted_least_squares(d.x(), d.y(), &w))
            .unwrap_or_else(|_| {
                // Too few distinct points: shift the pooled line instead.
                let shift =
                    members.iter().map(|&i| resid[i]).sum::<f64>() / members.len().max(1) as f64;
                let mut b = pooled.clone();
                b[0] += shift;
                b
            });
        let r = d.residuals(&b);
        ss += members.iter().map(|&i| r[i] * r[i]).sum::<f64>();
        beta.row_mut(c).copy_from(&b.transpose());
    }
    let s2 = (ss / n as f64).max(d.variance_floor());
    let contaminated = cfg.family == ComponentFamily::Contaminated;
    let params = ExpertParams {
        beta,
        sigma2: vec![s2; k],
        alpha: contaminated.then(|| vec![INIT_ALPHA; k]),
        eta: contaminated.then(|| vec![INIT_ETA; k]),
    };
    Ok((params, uniform_gating(d, cfg)?))
}

fn random_start(
    d: &Dataset,
    cfg: &ModelConfig,
    attempt: usize,
    curves: Option<&CurveEstimator>,
) -> Result<(ExpertParams, GatingState)> {
    let n = d.n();
    let k = cfg.k;
    let mut rng = attempt_rng(cfg.seed, attempt);
    let mut z = DMatrix::zeros(n, k);
    for i in 0..n {
        let mut s = 0.0;
        for c in 0..k {
            let e: f64 = rng.sample(Exp1);
            z[(i, c)] = e;
            s += e;
        }
        for c in 0..k {
            z[(i, c)] /= s;
        }
    }
    let contaminated = cfg.family == ComponentFamily::Contaminated;
    let v0 = if contaminated { INIT_ALPHA } else { 1.0 };
    let post = Posteriors {
        z,
        v: DMatrix::from_element(n, k, v0),
    };
    let eta = vec![INIT_ETA; k];
    let updater = GatingUpdater {
        kind: cfg.gating,
        logistic_prev: None,
        curves,
    };
    cm_step1_with(
        d,
        &post,
        contaminated.then_some(eta.as_slice()),
        cfg,
        &updater,
    )
}
