//! Univariate Gaussian and contaminated-Gaussian densities, evaluated in log
//! space.
//!
//! A contaminated Gaussian is a two-part scale mixture sharing one mean: with
//! weight `alpha` a point is typical and has variance `sigma2`, otherwise it
//! is a mild outlier with inflated variance `eta * sigma2`. Estimated `eta`
//! values can reach 1e5, so every density here is computed as a log and only
//! exponentiated at the very end.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    mu: f64,
    sigma2: f64,
}

impl GaussianParams {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mean must be finite, got {mu}"
            )));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "variance must be finite and positive, got {sigma2}"
            )));
        }
        Ok(Self { mu, sigma2 })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminatedGaussianParams {
    mu: f64,
    sigma2: f64,
    alpha: f64,
    eta: f64,
}

impl ContaminatedGaussianParams {
    pub fn new(mu: f64, sigma2: f64, alpha: f64, eta: f64) -> Result<Self> {
        let base = GaussianParams::new(mu, sigma2)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if !(eta.is_finite() && eta > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "eta must be finite and exceed 1, got {eta}"
            )));
        }
        Ok(Self {
            mu: base.mu,
            sigma2: base.sigma2,
            alpha,
            eta,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

/// Log density of `N(mu, sigma2)` at `y`, without validation.
#[inline]
pub(crate) fn normal_logpdf_unchecked(y: f64, mu: f64, sigma2: f64) -> f64 {
    let r = y - mu;
    -0.5 * (LN_2PI + sigma2.ln() + r * r / sigma2)
}

/// The two weighted log terms of a contaminated density:
/// `(ln α + ln N(y|μ,σ²), ln(1−α) + ln N(y|μ,ησ²))`.
///
/// `alpha == 1` is accepted and yields `-inf` for the second term; the
/// Gaussian family is evaluated through this path.
#[inline]
pub(crate) fn contaminated_log_terms(
    y: f64,
    mu: f64,
    sigma2: f64,
    alpha: f64,
    eta: f64,
) -> (f64, f64) {
    let typical = alpha.ln() + normal_logpdf_unchecked(y, mu, sigma2);
    let inflated = if alpha >= 1.0 {
        f64::NEG_INFINITY
    } else {
        (1.0 - alpha).ln() + normal_logpdf_unchecked(y, mu, eta * sigma2)
    };
    (typical, inflated)
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub fn gaussian_logpdf(y: f64, p: &GaussianParams) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "observation must be finite, got {y}"
        )));
    }
    Ok(normal_logpdf_unchecked(y, p.mu, p.sigma2))
}

pub fn gaussian_pdf(y: f64, p: &GaussianParams) -> Result<f64> {
    gaussian_logpdf(y, p).map(f64::exp)
}

pub fn contaminated_gaussian_logpdf(y: f64, p: &ContaminatedGaussianParams) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "observation must be finite, got {y}"
        )));
    }
    let (a, b) = contaminated_log_terms(y, p.mu, p.sigma2, p.alpha, p.eta);
    Ok(log_add_exp(a, b))
}

pub fn contaminated_gaussian_pdf(y: f64, p: &ContaminatedGaussianParams) -> Result<f64> {
    contaminated_gaussian_logpdf(y, p).map(f64::exp)
}

/// `ln Σ exp(v_i)` in the max-shifted form.
pub fn log_sum_exp(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Usage("log_sum_exp of an empty sequence".into()));
    }
    Ok(log_sum_exp_unchecked(values))
}

#[inline]
pub(crate) fn log_sum_exp_unchecked(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cg(mu: f64, sigma2: f64, alpha: f64, eta: f64) -> ContaminatedGaussianParams {
        ContaminatedGaussianParams::new(mu, sigma2, alpha, eta).unwrap()
    }

    #[test]
    fn standard_normal_at_mode() {
        let p = GaussianParams::new(0.0, 1.0).unwrap();
        assert_relative_eq!(
            gaussian_logpdf(0.0, &p).unwrap(),
            -0.918_938_533_204_672_8,
            epsilon = 1e-14
        );
    }

    #[test]
    fn zero_residual_is_normalizing_constant() {
        for s2 in [0.01, 1.0, 37.5] {
            let p = GaussianParams::new(2.5, s2).unwrap();
            let expected = -0.5 * (2.0 * std::f64::consts::PI * s2).ln();
            assert_relative_eq!(gaussian_logpdf(2.5, &p).unwrap(), expected, epsilon = 1e-14);
        }
    }

    #[test]
    fn matches_exp_space_formula() {
        let p = GaussianParams::new(0.0, 4.0).unwrap();
        let direct = (-(1.0f64) / 8.0).exp() / (2.0 * std::f64::consts::PI * 4.0).sqrt();
        assert!((gaussian_pdf(1.0, &p).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GaussianParams::new(0.0, 0.0).is_err());
        assert!(GaussianParams::new(0.0, -1.0).is_err());
        assert!(GaussianParams::new(f64::NAN, 1.0).is_err());
        assert!(ContaminatedGaussianParams::new(0.0, 1.0, 1.0, 4.0).is_err());
        assert!(ContaminatedGaussianParams::new(0.0, 1.0, 0.0, 4.0).is_err());
        assert!(ContaminatedGaussianParams::new(0.0, 1.0, 0.5, 1.0).is_err());
        let p = GaussianParams::new(0.0, 1.0).unwrap();
        assert!(gaussian_logpdf(f64::INFINITY, &p).is_err());
    }

    #[test]
    fn contaminated_hand_value() {
        let p = cg(0.0, 1.0, 0.5, 4.0);
        // 0.5 * phi(0) + 0.5 * phi(0)/2
        let expected = 0.5 * 0.398_942_280_401_432_7 + 0.5 * 0.199_471_140_200_716_35;
        assert_relative_eq!(
            contaminated_gaussian_pdf(0.0, &p).unwrap(),
            expected,
            epsilon = 1e-14
        );
        assert!((contaminated_gaussian_pdf(0.0, &p).unwrap() - 0.299_206_7).abs() < 1e-7);
    }

    #[test]
    fn alpha_near_one_is_gaussian() {
        let p = cg(1.0, 2.0, 1.0 - 1e-15, 7.0);
        let g = GaussianParams::new(1.0, 2.0).unwrap();
        for y in [-3.0, 0.0, 1.0, 2.5, 6.0] {
            let a = contaminated_gaussian_pdf(y, &p).unwrap();
            let b = gaussian_pdf(y, &g).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sum_exp_cases() {
        assert_relative_eq!(
            log_sum_exp(&[0.0, 0.0]).unwrap(),
            2f64.ln(),
            epsilon = 1e-15
        );
        assert_eq!(log_sum_exp(&[-3.25]).unwrap(), -3.25);
        let v = log_sum_exp(&[-1000.0, -1001.0]).unwrap();
        assert!(v.is_finite());
        assert!((v - (-1000.0 + (1.0 + (-1f64).exp()).ln())).abs() < 1e-12);
        assert!((v + 999.686_7).abs() < 1e-4);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY; 3]).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(matches!(log_sum_exp(&[]), Err(Error::Usage(_))));
    }

    /// Composite Simpson rule on a fine uniform mesh; independent of the
    /// log-space implementation.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    proptest! {
        #[test]
        fn integrates_to_one(mu in -5.0..5.0f64, s2 in 0.05..5.0f64, alpha in 0.01..0.99f64, eta in 1.01..200.0f64) {
            let p = cg(mu, s2, alpha, eta);
            let half = 12.0 * (eta * s2).sqrt();
            let total = simpson(|y| contaminated_gaussian_pdf(y, &p).unwrap(), mu - half, mu + half, 20_000);
            prop_assert!((total - 1.0).abs() < 1e-6, "integral {}", total);
        }

        #[test]
        fn symmetric_about_mean(mu in -5.0..5.0f64, s2 in 0.05..5.0f64, alpha in 0.01..0.99f64, eta in 1.01..200.0f64, d in 0.0..20.0f64) {
            let p = cg(mu, s2, alpha, eta);
            let a = contaminated_gaussian_logpdf(mu + d, &p).unwrap();
            let b = contaminated_gaussian_logpdf(mu - d, &p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn dominates_inflated_term(mu in -5.0..5.0f64, s2 in 0.05..5.0f64, alpha in 0.01..0.99f64, eta in 1.01..200.0f64, y in -50.0..50.0f64) {
            let p = cg(mu, s2, alpha, eta);
            let inflated = (1.0 - alpha) * gaussian_pdf(y, &GaussianParams::new(mu, eta * s2).unwrap()).unwrap();
            // Equality holds up to rounding when the typical term underflows.
            prop_assert!(contaminated_gaussian_pdf(y, &p).unwrap() >= inflated * (1.0 - 1e-13));
        }

        #[test]
        fn heavier_tails_than_typical_part(mu in -5.0..5.0f64, s2 in 0.05..5.0f64, alpha in 0.01..0.99f64, eta in 1.5..200.0f64) {
            let p = cg(mu, s2, alpha, eta);
            let g = GaussianParams::new(mu, s2).unwrap();
            // Beyond this distance the inflated term alone exceeds the typical density.
            let far = mu + 10.0 * (eta * s2).sqrt();
            prop_assert!(contaminated_gaussian_logpdf(far, &p).unwrap() > gaussian_logpdf(far, &g).unwrap());
        }
    }
}
