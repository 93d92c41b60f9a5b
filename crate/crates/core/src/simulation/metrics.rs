use itertools::Itertools;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::scenario::SimTruth;
use crate::error::{Error, Result};
use crate::estimators::{ExpertParams, FitResult};
use crate::regression::Dataset;

/// Permutation `perm` such that estimated component `perm[j]` plays the
/// role of true component `j`, minimizing the summed squared β distance.
/// The first minimizer in lexicographic order wins.
pub fn align_labels(est: &ExpertParams, truth: &SimTruth) -> Result<Vec<usize>> {
    let k = truth.k();
    if est.k() != k || est.beta.ncols() != truth.beta.ncols() {
        return Err(Error::Usage(format!(
            "estimate has {}x{} coefficients, truth has {}x{}",
            est.k(),
            est.beta.ncols(),
            k,
            truth.beta.ncols()
        )));
    }
    let cost = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(j, &e)| (est.beta.row(e) - truth.beta.row(j)).norm_squared())
            .sum()
    };
    let mut best: Option<(f64, Vec<usize>)> = None;
    for perm in (0..k).permutations(k) {
        let c = cost(&perm);
        if best.as_ref().map_or(true, |(b, _)| c < *b) {
            best = Some((c, perm));
        }
    }
    Ok(best.expect("at least one permutation").1)
}

/// One estimated parameter next to its true value, if the truth defines one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub estimate: f64,
    pub truth: Option<f64>,
}

impl ParamRecord {
    /// Signed error `θ̂ − θ`.
    pub fn bias(&self) -> Option<f64> {
        self.truth.map(|t| self.estimate - t)
    }

    pub fn squared_error(&self) -> Option<f64> {
        self.bias().map(|b| b * b)
    }
}

/// Accuracy of one fit against the generating truth, after label alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationMetrics {
    pub permutation: Vec<usize>,
    /// `(1/n) Σ_i Σ_k (π_k(x_i) − π̂_k(x_i))²`.
    pub mse_pi: f64,
    pub params: Vec<ParamRecord>,
}

impl ReplicationMetrics {
    pub fn param(&self, name: &str) -> Option<&ParamRecord> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// `(1/n) Σ_i Σ_k (π_ik − π̂_ik)²` for `n × K` proportion matrices.
pub fn mixing_mse(pi: &DMatrix<f64>, pi_hat: &DMatrix<f64>) -> f64 {
    (pi - pi_hat).norm_squared() / pi.nrows() as f64
}

pub fn compute_metrics(
    fit: &FitResult,
    d: &Dataset,
    truth: &SimTruth,
) -> Result<ReplicationMetrics> {
    let perm = align_labels(&fit.params, truth)?;
    let params = fit.params.permuted(&perm);
    let pi_hat = fit.gating.permuted(&perm).log_weights(d)?.map(f64::exp);
    if pi_hat.shape() != truth.pi.shape() {
        return Err(Error::Usage(
            "fitted and true mixing proportions differ in shape".into(),
        ));
    }
    let mse_pi = mixing_mse(&truth.pi, &pi_hat);

    let mut records = Vec::new();
    for k in 0..truth.k() {
        for j in 0..truth.beta.ncols() {
            records.push(ParamRecord {
                name: format!("beta{}{}", k + 1, j),
                estimate: params.beta[(k, j)],
                truth: Some(truth.beta[(k, j)]),
            });
        }
    }
    for k in 0..truth.k() {
        records.push(ParamRecord {
            name: format!("sigma{}", k + 1),
            estimate: params.sigma2[k].sqrt(),
            truth: Some(truth.sigma[k]),
        });
    }
    if let (Some(a), Some(e)) = (&params.alpha, &params.eta) {
        for k in 0..truth.k() {
            records.push(ParamRecord {
                name: format!("alpha{}", k + 1),
                estimate: a[k],
                truth: truth.alpha,
            });
        }
        for k in 0..truth.k() {
            records.push(ParamRecord {
                name: format!("eta{}", k + 1),
                estimate: e[k],
                truth: truth.eta,
            });
        }
    }
    Ok(ReplicationMetrics {
        permutation: perm,
        mse_pi,
        params: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{generate, pi1, Scenario, ScenarioConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn truth() -> SimTruth {
        generate(&ScenarioConfig::new(Scenario::A, 50, 1).unwrap())
            .unwrap()
            .1
    }

    fn params(beta: DMatrix<f64>) -> ExpertParams {
        ExpertParams {
            beta,
            sigma2: vec![1.0, 1.0],
            alpha: None,
            eta: None,
        }
    }

    #[test]
    fn identity_and_swap() {
        let t = truth();
        assert_eq!(
            align_labels(&params(t.beta.clone()), &t).unwrap(),
            vec![0, 1]
        );
        let swapped = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 0.0, 1.0]);
        assert_eq!(align_labels(&params(swapped), &t).unwrap(), vec![1, 0]);
    }

    #[test]
    fn small_perturbations_keep_identity() {
        let t = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let noise = DMatrix::from_fn(2, 2, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
            assert_eq!(
                align_labels(&params(&t.beta + noise), &t).unwrap(),
                vec![0, 1]
            );
        }
    }

    #[test]
    fn mixing_mse_values() {
        let t = truth();
        assert_eq!(mixing_mse(&t.pi, &t.pi), 0.0);
        // Constant one-half against the sine curve: 2 E[(π₁(x) − 0.5)²] for
        // uniform x equals 2 (0.48 − 1.28/π) by E[sin πx] = 2/π and
        // E[sin² πx] = 1/2.
        let half_exact = 2.0 * (0.48 - 1.28 / std::f64::consts::PI);
        assert!((half_exact * 100.0 - 14.51).abs() < 0.01);
        // The best constant, E[π₁] = 0.1 + 1.6/π, leaves 2 · 0.64 Var(sin πx).
        let best = 0.1 + 1.6 / std::f64::consts::PI;
        let best_exact = 1.28 * (0.5 - 4.0 / std::f64::consts::PI.powi(2));
        assert!((best_exact * 100.0 - 12.12).abs() < 0.01);
        let (_, big) = generate(&ScenarioConfig::new(Scenario::A, 20_000, 5).unwrap()).unwrap();
        let n = big.pi.nrows();
        let half = DMatrix::from_element(n, 2, 0.5);
        assert!((mixing_mse(&big.pi, &half) - half_exact).abs() < 0.003);
        let constant = DMatrix::from_fn(n, 2, |_, k| if k == 0 { best } else { 1.0 - best });
        assert!((mixing_mse(&big.pi, &constant) - best_exact).abs() < 0.003);
        assert!((pi1(0.25) - (0.1 + 0.8 * (std::f64::consts::PI / 4.0).sin())).abs() < 1e-15);
    }

    #[test]
    fn bias_sign_convention() {
        let r = ParamRecord {
            name: "beta11".into(),
            estimate: 1.1,
            truth: Some(1.0),
        };
        assert!((r.bias().unwrap() - 0.1).abs() < 1e-12);
        assert!((r.squared_error().unwrap() - 0.01).abs() < 1e-12);
    }
}
