//! The E-step and the two conditional-maximization steps.
//!
//! The Gaussian family runs through the same code as the contaminated family
//! with `α = 1`, which forces `V ≡ 1` and `w_ik = z_ik`.

use nalgebra::{DMatrix, DVector};

use super::config::{ComponentFamily, GatingKind, ModelConfig};
use super::model::{ExpertParams, GatingState, Posteriors};
use crate::distributions::{contaminated_log_terms, log_add_exp, log_sum_exp_unchecked};
use crate::error::{Error, Result};
use crate::gating::{fit_gating, CurveEstimator, GridSpec, LogisticGating};
use crate::regression::{weighted_least_squares, weighted_sigma2, Dataset, WeightVector};

/// Posteriors together with the observed log-likelihood at the parameters
/// that produced them.
#[derive(Debug, Clone)]
pub struct EStep {
    pub posteriors: Posteriors,
    pub loglik: f64,
    /// Rows where every component density underflowed; given uniform `z`.
    pub underflow_rows: usize,
}

/// `n × K` log component densities `ln CN_k(y_i)` and the matching `v_ik`.
pub(crate) fn component_log_densities(
    d: &Dataset,
    params: &ExpertParams,
) -> (DMatrix<f64>, DMatrix<f64>) {
    component_log_densities_raw(d.y(), d.x(), params)
}

pub(crate) fn component_log_densities_raw(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    params: &ExpertParams,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = y.len();
    let k = params.k();
    let means = x * params.beta.transpose();
    let mut logd = DMatrix::zeros(n, k);
    let mut v = DMatrix::from_element(n, k, 1.0);
    for c in 0..k {
        let alpha = params.alpha_or_one(c);
        let eta = params.eta_or_one(c);
        let s2 = params.sigma2[c];
        for i in 0..n {
            let (typical, inflated) = contaminated_log_terms(y[i], means[(i, c)], s2, alpha, eta);
            let total = log_add_exp(typical, inflated);
            logd[(i, c)] = total;
            if params.is_contaminated() {
                v[(i, c)] = if total.is_finite() {
                    (typical - total).exp()
                } else {
                    alpha
                };
            }
        }
    }
    (logd, v)
}

pub fn e_step(d: &Dataset, params: &ExpertParams, gating: &GatingState) -> Result<EStep> {
    params.validate(d.p() + 1)?;
    if gating.k() != params.k() {
        return Err(Error::Usage(format!(
            "gating has {} components, experts have {}",
            gating.k(),
            params.k()
        )));
    }
    let n = d.n();
    let k = params.k();
    let log_pi = gating.log_weights(d)?;
    let (logd, v) = component_log_densities(d, params);

    let mut z = DMatrix::zeros(n, k);
    let mut joint = vec![0.0; k];
    let mut loglik = 0.0;
    let mut underflow_rows = 0;
    for i in 0..n {
        for c in 0..k {
            joint[c] = log_pi[(i, c)] + logd[(i, c)];
        }
        let lse = log_sum_exp_unchecked(&joint);
        if !lse.is_finite() {
            underflow_rows += 1;
            for c in 0..k {
                z[(i, c)] = 1.0 / k as f64;
            }
            loglik += lse;
            continue;
        }
        let mut s = 0.0;
        for c in 0..k {
            let zc = (joint[c] - lse).exp();
            z[(i, c)] = zc;
            s += zc;
        }
        for c in 0..k {
            z[(i, c)] /= s;
        }
        loglik += lse;
    }
    if underflow_rows > 0 {
        log::warn!("{underflow_rows} observation(s) have underflowing density in every component");
    }
    Ok(EStep {
        posteriors: Posteriors { z, v },
        loglik,
        underflow_rows,
    })
}

/// Observed log-likelihood `Σ_i ln Σ_k π_k CN_k(y_i)`.
pub fn observed_loglik(d: &Dataset, params: &ExpertParams, gating: &GatingState) -> Result<f64> {
    e_step(d, params, gating).map(|e| e.loglik)
}

/// `Σ_i ln Σ_k exp(log_pi_ik) CN_k(y_i)` for observations outside any
/// [`Dataset`], such as held-out folds.
pub(crate) fn mixture_loglik_raw(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    params: &ExpertParams,
    log_pi: &DMatrix<f64>,
) -> f64 {
    let (logd, _) = component_log_densities_raw(y, x, params);
    let mut row = vec![0.0; params.k()];
    (0..y.len())
        .map(|i| {
            for (c, r) in row.iter_mut().enumerate() {
                *r = log_pi[(i, c)] + logd[(i, c)];
            }
            log_sum_exp_unchecked(&row)
        })
        .sum()
}

/// Everything CM-step 1 needs besides the posteriors.
pub(crate) struct GatingUpdater<'a> {
    pub kind: GatingKind,
    pub logistic_prev: Option<&'a LogisticGating>,
    pub curves: Option<&'a CurveEstimator>,
}

pub(crate) fn cm_step1_with(
    d: &Dataset,
    post: &Posteriors,
    eta_prev: Option<&[f64]>,
    cfg: &ModelConfig,
    updater: &GatingUpdater<'_>,
) -> Result<(ExpertParams, GatingState)> {
    let n = d.n();
    let k = post.k();
    if post.n() != n {
        return Err(Error::Usage(format!(
            "posteriors have {} rows, data has {n}",
            post.n()
        )));
    }
    let contaminated = cfg.family == ComponentFamily::Contaminated;
    let eta_prev: Vec<f64> = match (contaminated, eta_prev) {
        (true, Some(e)) if e.len() == k => e.to_vec(),
        (true, _) => {
            return Err(Error::Usage(
                "contaminated CM-step needs previous eta per component".into(),
            ))
        }
        (false, _) => vec![1.0; k],
    };
    let min_mass = k as f64 * 1e-6 * n as f64;
    let floor = d.variance_floor();
    let p1 = d.p() + 1;

    let mut beta = DMatrix::zeros(k, p1);
    let mut sigma2 = vec![0.0; k];
    let mut alpha = vec![1.0; k];
    let mut n_k = vec![0.0; k];
    for c in 0..k {
        let zc = post.z.column(c);
        let mass = zc.sum();
        if !(mass >= min_mass) {
            return Err(Error::EmptyComponent {
                component: c,
                n_k: mass,
            });
        }
        n_k[c] = mass;
        let w = if contaminated {
            let vc = post.v.column(c);
            let good: f64 = zc.iter().zip(vc.iter()).map(|(z, v)| z * v).sum();
            alpha[c] = (good / mass).clamp(cfg.alpha_bounds.0, cfg.alpha_bounds.1);
            DVector::from_iterator(
                n,
                zc.iter()
                    .zip(vc.iter())
                    .map(|(z, v)| z * (v + (1.0 - v) / eta_prev[c])),
            )
        } else {
            zc.into_owned()
        };
        let w = WeightVector::new(w).map_err(|_| Error::EmptyComponent {
            component: c,
            n_k: mass,
        })?;
        let b = weighted_least_squares(d.x(), d.y(), &w).map_err(|e| e.in_component(c))?;
        let r = d.residuals(&b);
        sigma2[c] = weighted_sigma2(&r, &w, mass, floor).map_err(|_| Error::EmptyComponent {
            component: c,
            n_k: mass,
        })?;
        beta.row_mut(c).copy_from(&b.transpose());
    }

    let gating = match updater.kind {
        GatingKind::Constant => GatingState::Constant {
            weights: n_k.iter().map(|m| m / n as f64).collect(),
        },
        GatingKind::Logistic => {
            let init = updater
                .logistic_prev
                .cloned()
                .unwrap_or_else(|| LogisticGating::zeros(k, 2));
            GatingState::Logistic {
                model: fit_gating(&d.gating_design(), &post.z, &init)?,
            }
        }
        GatingKind::Nonparametric => {
            let estimator = updater.curves.ok_or_else(|| {
                Error::Usage("nonparametric CM-step needs a curve estimator".into())
            })?;
            GatingState::Nonparametric {
                curves: estimator.estimate(&post.z)?,
            }
        }
    };

    let params = ExpertParams {
        beta,
        sigma2,
        alpha: contaminated.then_some(alpha),
        eta: contaminated.then_some(eta_prev),
    };
    Ok((params, gating))
}

/// Default local points for nonparametric gating on `d`.
pub(crate) fn default_grid(d: &Dataset, cfg: &ModelConfig) -> Result<GridSpec> {
    match &cfg.grid {
        Some(g) => Ok(g.clone()),
        None => GridSpec::for_covariate(d.t().as_slice()),
    }
}

pub(crate) fn curve_estimator(d: &Dataset, cfg: &ModelConfig) -> Result<Option<CurveEstimator>> {
    if cfg.gating != GatingKind::Nonparametric {
        return Ok(None);
    }
    let kernel = cfg.kernel.ok_or_else(|| {
        Error::InvalidParameter("nonparametric gating requires a bandwidth".into())
    })?;
    Ok(Some(CurveEstimator::new(
        d.t().as_slice(),
        default_grid(d, cfg)?,
        kernel,
    )?))
}

/// Updates `α`, `β`, `σ²` and the gating given the posteriors and the
/// previous `η` (ignored for the Gaussian family). The returned parameters
/// carry `eta_prev` unchanged.
pub fn cm_step1(
    d: &Dataset,
    post: &Posteriors,
    eta_prev: Option<&[f64]>,
    cfg: &ModelConfig,
    gating_prev: Option<&GatingState>,
) -> Result<(ExpertParams, GatingState)> {
    let logistic_prev = match gating_prev {
        Some(GatingState::Logistic { model }) => Some(model),
        _ => None,
    };
    let estimator = curve_estimator(d, cfg)?;
    let updater = GatingUpdater {
        kind: cfg.gating,
        logistic_prev,
        curves: estimator.as_ref(),
    };
    cm_step1_with(d, post, eta_prev, cfg, &updater)
}

/// Closed-form maximizer of `−½ a ln η − ½ b/η` over `η ∈ bounds`, with
/// `a = Σ z(1−v)` and `b = Σ z(1−v) r²/σ²`.
pub fn eta_update(a: f64, b: f64, bounds: (f64, f64)) -> f64 {
    if !(a > 0.0) || !b.is_finite() {
        return bounds.0;
    }
    (b / a).clamp(bounds.0, bounds.1)
}

pub fn cm_step2_eta(
    post: &Posteriors,
    residuals: &DMatrix<f64>,
    sigma2: &[f64],
    bounds: (f64, f64),
) -> Vec<f64> {
    (0..post.k())
        .map(|c| {
            let mut a = 0.0;
            let mut b = 0.0;
            for i in 0..post.n() {
                let m = post.z[(i, c)] * (1.0 - post.v[(i, c)]);
                a += m;
                b += m * residuals[(i, c)].powi(2) / sigma2[c];
            }
            eta_update(a, b, bounds)
        })
        .collect()
}

/// `n × K` residuals `y_i − x_iᵀβ_k`.
pub fn residual_matrix(d: &Dataset, params: &ExpertParams) -> DMatrix<f64> {
    let means = d.x() * params.beta.transpose();
    DMatrix::from_fn(d.n(), params.k(), |i, c| d.y()[i] - means[(i, c)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::ModelKind;

    fn tiny() -> Dataset {
        Dataset::from_columns(
            &[0.1, 1.2, 1.9, 3.2, 5.0, 4.1],
            &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        )
        .unwrap()
    }

    fn gaussian_params(beta: &[[f64; 2]], sigma2: &[f64]) -> ExpertParams {
        ExpertParams {
            beta: DMatrix::from_fn(beta.len(), 2, |k, j| beta[k][j]),
            sigma2: sigma2.to_vec(),
            alpha: None,
            eta: None,
        }
    }

    #[test]
    fn single_component_has_unit_responsibilities() {
        let d = tiny();
        let p = gaussian_params(&[[0.0, 1.0]], &[1.0]);
        let e = e_step(&d, &p, &GatingState::Constant { weights: vec![1.0] }).unwrap();
        assert!(e.posteriors.z.iter().all(|&z| z == 1.0));
        assert!(e.posteriors.v.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn identical_components_split_evenly() {
        let d = tiny();
        let p = ExpertParams {
            beta: DMatrix::from_row_slice(2, 2, &[0.5, 0.8, 0.5, 0.8]),
            sigma2: vec![0.7, 0.7],
            alpha: Some(vec![0.9, 0.9]),
            eta: Some(vec![5.0, 5.0]),
        };
        let e = e_step(
            &d,
            &p,
            &GatingState::Constant {
                weights: vec![0.5, 0.5],
            },
        )
        .unwrap();
        assert!(e.posteriors.z.iter().all(|&z| (z - 0.5).abs() < 1e-15));
    }

    #[test]
    fn alpha_near_one_gives_unit_v() {
        let d = tiny();
        let p = ExpertParams {
            beta: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            sigma2: vec![1.0],
            alpha: Some(vec![1.0 - 1e-15]),
            eta: Some(vec![10.0]),
        };
        let e = e_step(&d, &p, &GatingState::Constant { weights: vec![1.0] }).unwrap();
        assert!(e.posteriors.v.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn loglik_matches_direct_density_sum() {
        let d = tiny();
        let p = ExpertParams {
            beta: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.3]),
            sigma2: vec![0.5, 2.0],
            alpha: Some(vec![0.8, 0.95]),
            eta: Some(vec![4.0, 30.0]),
        };
        let w = [0.3, 0.7];
        let e = e_step(
            &d,
            &p,
            &GatingState::Constant {
                weights: w.to_vec(),
            },
        )
        .unwrap();
        let phi = |y: f64, m: f64, s2: f64| {
            (-(y - m).powi(2) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt()
        };
        let mut ll = 0.0;
        for i in 0..d.n() {
            let (x, y) = (d.x()[(i, 1)], d.y()[i]);
            let mut f = 0.0;
            for c in 0..2 {
                let m = p.beta[(c, 0)] + p.beta[(c, 1)] * x;
                let a = p.alpha.as_ref().unwrap()[c];
                let eta = p.eta.as_ref().unwrap()[c];
                f += w[c] * (a * phi(y, m, p.sigma2[c]) + (1.0 - a) * phi(y, m, eta * p.sigma2[c]));
            }
            ll += f.ln();
        }
        assert!((e.loglik - ll).abs() < 1e-10 * ll.abs());
    }

    #[test]
    fn unit_v_reduces_to_gaussian_m_step() {
        let d = tiny();
        let z = DMatrix::from_row_slice(
            6,
            2,
            &[0.9, 0.1, 0.8, 0.2, 0.6, 0.4, 0.3, 0.7, 0.2, 0.8, 0.5, 0.5],
        );
        let post = Posteriors {
            z: z.clone(),
            v: DMatrix::from_element(6, 2, 1.0),
        };
        let cfg_c = ModelConfig::new(ModelKind::Cgmlr, 2);
        let cfg_g = ModelConfig::new(ModelKind::Gmlr, 2);
        let (pc, _) = cm_step1(&d, &post, Some(&[7.0, 3.0]), &cfg_c, None).unwrap();
        let (pg, _) = cm_step1(&d, &post, None, &cfg_g, None).unwrap();
        assert_eq!(pc.alpha.as_ref().unwrap(), &vec![0.99, 0.99]);
        assert!((&pc.beta - &pg.beta).amax() < 1e-14);
        for c in 0..2 {
            assert!((pc.sigma2[c] - pg.sigma2[c]).abs() < 1e-14);
        }
    }

    #[test]
    fn hard_single_component_is_ols() {
        let d = tiny();
        let post = Posteriors {
            z: DMatrix::from_fn(6, 2, |_, c| if c == 0 { 1.0 } else { 0.0 }),
            v: DMatrix::from_element(6, 2, 1.0),
        };
        let cfg = ModelConfig::new(ModelKind::Gmlr, 2);
        // The empty second component is rejected.
        assert!(matches!(
            cm_step1(&d, &post, None, &cfg, None),
            Err(Error::EmptyComponent { component: 1, .. })
        ));
        let post1 = Posteriors {
            z: DMatrix::from_element(6, 1, 1.0),
            v: DMatrix::from_element(6, 1, 1.0),
        };
        let (p, g) = cm_step1(
            &d,
            &post1,
            None,
            &ModelConfig::new(ModelKind::Gmlr, 1),
            None,
        )
        .unwrap();
        let ols = weighted_least_squares(d.x(), d.y(), &WeightVector::ones(6)).unwrap();
        assert!((p.beta_row(0) - ols).amax() < 1e-14);
        assert_eq!(g, GatingState::Constant { weights: vec![1.0] });
    }

    #[test]
    fn hand_evaluated_contaminated_updates() {
        let d = tiny();
        let z = [
            [0.9, 0.1],
            [0.7, 0.3],
            [0.6, 0.4],
            [0.5, 0.5],
            [0.2, 0.8],
            [0.1, 0.9],
        ];
        let v = [
            [0.95, 0.5],
            [0.9, 0.8],
            [0.2, 0.99],
            [0.85, 0.7],
            [0.6, 0.9],
            [0.99, 0.3],
        ];
        let eta = [4.0, 9.0];
        let post = Posteriors {
            z: DMatrix::from_fn(6, 2, |i, c| z[i][c]),
            v: DMatrix::from_fn(6, 2, |i, c| v[i][c]),
        };
        let cfg = ModelConfig::new(ModelKind::Cgmlr, 2);
        let (p, g) = cm_step1(&d, &post, Some(&eta), &cfg, None).unwrap();

        let xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [0.1, 1.2, 1.9, 3.2, 5.0, 4.1];
        for c in 0..2 {
            let nk: f64 = (0..6).map(|i| z[i][c]).sum();
            let alpha: f64 = (0..6).map(|i| z[i][c] * v[i][c]).sum::<f64>() / nk;
            let w: Vec<f64> = (0..6)
                .map(|i| z[i][c] * (v[i][c] + (1.0 - v[i][c]) / eta[c]))
                .collect();
            // Weighted simple regression by hand.
            let sw: f64 = w.iter().sum();
            let xbar = (0..6).map(|i| w[i] * xs[i]).sum::<f64>() / sw;
            let ybar = (0..6).map(|i| w[i] * ys[i]).sum::<f64>() / sw;
            let sxy: f64 = (0..6).map(|i| w[i] * (xs[i] - xbar) * (ys[i] - ybar)).sum();
            let sxx: f64 = (0..6).map(|i| w[i] * (xs[i] - xbar).powi(2)).sum();
            let b1 = sxy / sxx;
            let b0 = ybar - b1 * xbar;
            let s2 = (0..6)
                .map(|i| w[i] * (ys[i] - b0 - b1 * xs[i]).powi(2))
                .sum::<f64>()
                / nk;
            assert!((p.alpha.as_ref().unwrap()[c] - alpha.clamp(0.01, 0.99)).abs() < 1e-10);
            assert!((p.beta[(c, 0)] - b0).abs() < 1e-10);
            assert!((p.beta[(c, 1)] - b1).abs() < 1e-10);
            assert!((p.sigma2[c] - s2).abs() < 1e-10);
        }
        match g {
            GatingState::Constant { weights } => {
                assert!((weights[0] - 3.0 / 6.0).abs() < 1e-15);
            }
            _ => panic!("constant gating expected"),
        }
    }

    #[test]
    fn eta_closed_form_cases() {
        let bounds = (1.0 + 1e-6, 1e6);
        assert_eq!(eta_update(2.0, 8.0, bounds), 4.0);
        assert_eq!(eta_update(2.0, 1.0, bounds), bounds.0);
        assert_eq!(eta_update(0.0, 3.0, bounds), bounds.0);
        assert_eq!(eta_update(1e-9, 1.0, bounds), bounds.1);
    }
}
