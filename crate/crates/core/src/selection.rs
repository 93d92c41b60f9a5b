//! Degrees of freedom, kernel constants and BIC.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{ComponentFamily, GatingKind, ModelConfig};
use crate::gating::{KernelFamily, KernelSpec};

/// Parametric and nonparametric parts of the model complexity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreesOfFreedom {
    /// Expert parameters plus any parametric gating coefficients.
    pub df1: f64,
    /// `K · EDF` for nonparametric gating, otherwise 0.
    pub df2: f64,
    pub total: f64,
}

/// Free parameter count excluding nonparametric curves. Gating
/// coefficients of the constant and logistic models are included here.
pub fn parametric_df(
    k: usize,
    p: usize,
    q: usize,
    family: ComponentFamily,
    gating: GatingKind,
) -> f64 {
    let k = k as f64;
    let per_component = match family {
        ComponentFamily::Contaminated => 3.0,
        ComponentFamily::Gaussian => 1.0,
    };
    let experts = per_component * k + k * (p as f64 + 1.0);
    let gate = match gating {
        GatingKind::Constant => k - 1.0,
        GatingKind::Logistic => (k - 1.0) * (q as f64 + 1.0),
        GatingKind::Nonparametric => 0.0,
    };
    experts + gate
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Option<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Some(left + right + delta / 15.0);
        }
        if depth == 0 {
            return None;
        }
        Some(
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?,
        )
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Numeric(format!("quadrature over [{a}, {b}] did not converge")))
}

/// Integrates `f` over `[-10, 10]`, splitting at zero so the kernel peak is
/// always a node.
pub fn integrate_kernel_range(f: &dyn Fn(f64) -> f64) -> Result<f64> {
    Ok(adaptive_simpson(f, -10.0, 0.0, 1e-13, 40)? + adaptive_simpson(f, 0.0, 10.0, 1e-13, 40)?)
}

fn std_normal(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Self-convolution of the standard Gaussian kernel: a normal density with
/// variance 2.
fn gaussian_self_convolution(u: f64) -> f64 {
    (-0.25 * u * u).exp() / (4.0 * PI).sqrt()
}

/// Numerator `K(0) − ½∫K²` and denominator `∫(K − ½ K*K)²` of `τ_K`.
fn kernel_pieces(family: KernelFamily) -> Result<(f64, f64)> {
    static GAUSSIAN: OnceLock<std::result::Result<(f64, f64), String>> = OnceLock::new();
    match family {
        KernelFamily::Gaussian => GAUSSIAN
            .get_or_init(|| {
                let k2 = integrate_kernel_range(&|u| std_normal(u).powi(2))
                    .map_err(|e| e.to_string())?;
                let den = integrate_kernel_range(&|u| {
                    (std_normal(u) - 0.5 * gaussian_self_convolution(u)).powi(2)
                })
                .map_err(|e| e.to_string())?;
                Ok((std_normal(0.0) - 0.5 * k2, den))
            })
            .clone()
            .map_err(Error::Numeric),
    }
}

/// `K(0) − ½∫K²` for the kernel's base function.
pub fn kernel_numerator(kernel: &KernelSpec) -> Result<f64> {
    kernel_pieces(kernel.family()).map(|p| p.0)
}

/// The kernel constant `τ_K = [K(0) − ½∫K²] / ∫{K − ½(K*K)}²`.
pub fn tau_k(kernel: &KernelSpec) -> Result<f64> {
    let (num, den) = kernel_pieces(kernel.family())?;
    Ok(num / den)
}

/// Effective degrees of freedom of one local-linear curve over a support of
/// length `support`.
pub fn edf(kernel: &KernelSpec, support: f64) -> Result<f64> {
    if !(support >= 0.0 && support.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "support length must be non-negative, got {support}"
        )));
    }
    let (num, den) = kernel_pieces(kernel.family())?;
    Ok(num / den * support / kernel.bandwidth() * num)
}

/// `−2ℓ + df · ln n`; lower is better.
pub fn bic(loglik: f64, df: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Usage("BIC needs at least one observation".into()));
    }
    Ok(-2.0 * loglik + df * (n as f64).ln())
}

/// Complexity of the model described by `cfg` with `p` expert covariates
/// and a scalar gating covariate spanning `support`.
pub fn degrees_of_freedom(cfg: &ModelConfig, p: usize, support: f64) -> Result<DegreesOfFreedom> {
    let df1 = parametric_df(cfg.k, p, 1, cfg.family, cfg.gating);
    let df2 = match (cfg.gating, &cfg.kernel) {
        (GatingKind::Nonparametric, Some(kernel)) => cfg.k as f64 * edf(kernel, support)?,
        (GatingKind::Nonparametric, None) => {
            return Err(Error::InvalidParameter(
                "nonparametric gating requires a bandwidth".into(),
            ))
        }
        _ => 0.0,
    };
    Ok(DegreesOfFreedom {
        df1,
        df2,
        total: df1 + df2,
    })
}
