//! Multinomial-logistic gating and its Newton-Raphson update.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::log_sum_exp_unchecked;
use crate::error::{Error, Result};

/// Largest allowed magnitude of any gating coefficient.
pub const GAMMA_CAP: f64 = 30.0;
const MAX_HALVINGS: usize = 30;
const MAX_NEWTON_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-8;

/// Coefficients `γ_1..γ_{K−1}` as rows; the last component's coefficients
/// are fixed at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticGating {
    gamma: DMatrix<f64>,
}

impl LogisticGating {
    pub fn new(gamma: DMatrix<f64>) -> Result<Self> {
        if gamma.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "gating coefficients must be finite".into(),
            ));
        }
        if gamma.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "gating needs at least an intercept".into(),
            ));
        }
        Ok(Self { gamma })
    }

    /// All-zero coefficients: uniform gating over `k` components with
    /// `n_coef = q + 1` coefficients per component.
    pub fn zeros(k: usize, n_coef: usize) -> Self {
        Self {
            gamma: DMatrix::zeros(k.saturating_sub(1), n_coef),
        }
    }

    pub fn k(&self) -> usize {
        self.gamma.nrows() + 1
    }

    pub fn n_coef(&self) -> usize {
        self.gamma.ncols()
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.gamma.len(), self.gamma.transpose().iter().copied())
    }

    fn from_vector(v: &DVector<f64>, k: usize, n_coef: usize) -> Self {
        Self {
            gamma: DMatrix::from_row_slice(k - 1, n_coef, v.as_slice()),
        }
    }
}

fn check_dims(t: &DMatrix<f64>, g: &LogisticGating) -> Result<()> {
    if t.ncols() != g.n_coef() {
        return Err(Error::Usage(format!(
            "gating design has {} columns but coefficients have {}",
            t.ncols(),
            g.n_coef()
        )));
    }
    Ok(())
}

/// `ln π_k(t_i)` for every row of `t`.
pub fn log_softmax_gating(t: &DMatrix<f64>, g: &LogisticGating) -> Result<DMatrix<f64>> {
    check_dims(t, g)?;
    let k = g.k();
    let mut logits = DMatrix::zeros(t.nrows(), k);
    if k > 1 {
        logits
            .columns_mut(0, k - 1)
            .copy_from(&(t * g.gamma.transpose()));
    }
    let mut row = vec![0.0; k];
    for i in 0..t.nrows() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = logits[(i, j)];
        }
        let lse = log_sum_exp_unchecked(&row);
        for j in 0..k {
            logits[(i, j)] -= lse;
        }
    }
    Ok(logits)
}

pub fn softmax_gating(t: &DMatrix<f64>, g: &LogisticGating) -> Result<DMatrix<f64>> {
    Ok(log_softmax_gating(t, g)?.map(f64::exp))
}

/// `Q(γ) = Σ_i Σ_k z_ik ln π_k(t_i | γ)`.
pub fn gating_objective(t: &DMatrix<f64>, z: &DMatrix<f64>, g: &LogisticGating) -> Result<f64> {
    let lp = log_softmax_gating(t, g)?;
    Ok(z.iter()
        .zip(lp.iter())
        .filter(|(zi, _)| **zi > 0.0)
        .map(|(zi, l)| zi * l)
        .sum())
}

/// Gradient of `Q` with respect to the free coefficients, ordered
/// component-major.
pub fn gating_gradient(
    t: &DMatrix<f64>,
    z: &DMatrix<f64>,
    g: &LogisticGating,
) -> Result<DVector<f64>> {
    let pi = softmax_gating(t, g)?;
    Ok(gradient_from_probs(t, z, &pi))
}

fn gradient_from_probs(t: &DMatrix<f64>, z: &DMatrix<f64>, pi: &DMatrix<f64>) -> DVector<f64> {
    let (n, q1) = t.shape();
    let k = pi.ncols();
    let mut grad = DVector::zeros((k - 1) * q1);
    for i in 0..n {
        let s: f64 = z.row(i).sum();
        for c in 0..k - 1 {
            let r = z[(i, c)] - s * pi[(i, c)];
            for j in 0..q1 {
                grad[c * q1 + j] += r * t[(i, j)];
            }
        }
    }
    grad
}

/// Hessian of `Q`; negative semi-definite.
pub fn gating_hessian(
    t: &DMatrix<f64>,
    z: &DMatrix<f64>,
    g: &LogisticGating,
) -> Result<DMatrix<f64>> {
    let pi = softmax_gating(t, g)?;
    Ok(hessian_from_probs(t, z, &pi))
}

fn hessian_from_probs(t: &DMatrix<f64>, z: &DMatrix<f64>, pi: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, q1) = t.shape();
    let k = pi.ncols();
    let dim = (k - 1) * q1;
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..n {
        let s: f64 = z.row(i).sum();
        for a in 0..k - 1 {
            for b in 0..k - 1 {
                let delta = if a == b { 1.0 } else { 0.0 };
                let c = -s * pi[(i, a)] * (delta - pi[(i, b)]);
                if c == 0.0 {
                    continue;
                }
                for j in 0..q1 {
                    for m in 0..q1 {
                        h[(a * q1 + j, b * q1 + m)] += c * t[(i, j)] * t[(i, m)];
                    }
                }
            }
        }
    }
    h
}

/// Solves `(−H + λI) d = g`, raising `λ` until the system is positive
/// definite.
fn damped_newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let neg_h = -h;
    if let Some(ch) = neg_h.clone().cholesky() {
        let d = ch.solve(g);
        if d.iter().all(|v| v.is_finite()) {
            return Some(d);
        }
    }
    let scale = neg_h.diagonal().amax().max(1e-12);
    let mut lambda = 1e-10 * scale;
    for _ in 0..40 {
        let mut damped = neg_h.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += lambda;
        }
        if let Some(ch) = damped.cholesky() {
            let d = ch.solve(g);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        lambda *= 10.0;
    }
    None
}

/// Maximizes `Q(γ)` from `init`, returning the fitted gating and the
/// objective after every accepted Newton step (first entry is `Q(init)`).
pub fn fit_gating_trace(
    t: &DMatrix<f64>,
    z: &DMatrix<f64>,
    init: &LogisticGating,
) -> Result<(LogisticGating, Vec<f64>)> {
    check_dims(t, init)?;
    let k = init.k();
    if z.nrows() != t.nrows() || z.ncols() != k {
        return Err(Error::Usage(format!(
            "responsibilities are {}x{}, expected {}x{k}",
            z.nrows(),
            z.ncols(),
            t.nrows()
        )));
    }
    if k == 1 {
        return Ok((init.clone(), vec![0.0]));
    }
    let q1 = init.n_coef();
    let objective = |v: &DVector<f64>| -> (f64, DMatrix<f64>) {
        let g = LogisticGating::from_vector(v, k, q1);
        let lp = log_softmax_gating(t, &g).expect("dimensions checked");
        let q = z
            .iter()
            .zip(lp.iter())
            .filter(|(zi, _)| **zi > 0.0)
            .map(|(zi, l)| zi * l)
            .sum();
        (q, lp)
    };

    let mut gamma = init.to_vector().map(|v| v.clamp(-GAMMA_CAP, GAMMA_CAP));
    let (mut q, mut lp) = objective(&gamma);
    if !q.is_finite() {
        return Err(Error::GatingDivergence(format!(
            "non-finite objective {q} at start"
        )));
    }
    let mut trace = vec![q];

    for _ in 0..MAX_NEWTON_ITER {
        let pi = lp.map(f64::exp);
        let grad = gradient_from_probs(t, z, &pi);
        let hess = hessian_from_probs(t, z, &pi);
        let Some(direction) = damped_newton_direction(&hess, &grad) else {
            break;
        };

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = (&gamma + &direction * step).map(|v| v.clamp(-GAMMA_CAP, GAMMA_CAP));
            let (q_new, lp_new) = objective(&candidate);
            if q_new.is_finite() && q_new >= q {
                accepted = Some((candidate, q_new, lp_new));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, q_new, lp_new)) = accepted else {
            break;
        };
        let change = (&candidate - &gamma).amax();
        gamma = candidate;
        q = q_new;
        lp = lp_new;
        trace.push(q);
        if change < NEWTON_TOL {
            break;
        }
    }
    Ok((LogisticGating::from_vector(&gamma, k, q1), trace))
}

pub fn fit_gating(
    t: &DMatrix<f64>,
    z: &DMatrix<f64>,
    init: &LogisticGating,
) -> Result<LogisticGating> {
    fit_gating_trace(t, z, init).map(|(g, _)| g)
}
