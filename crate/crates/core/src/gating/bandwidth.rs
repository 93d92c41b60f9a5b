//! Cross-validated bandwidth selection for nonparametric gating.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::steps::mixture_loglik_raw;
use crate::estimators::{fit, GatingKind, GatingState, ModelConfig};
use crate::regression::Dataset;

/// Held-out log-likelihood of one candidate bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthScore {
    pub h: f64,
    /// Summed held-out log-likelihood per fold; `-inf` where the training
    /// fit failed.
    pub fold_logliks: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub scores: Vec<BandwidthScore>,
    pub selected: f64,
    pub folds: usize,
}

/// Fold index of every observation: contiguous blocks of the `t` order,
/// ties broken by observation index.
pub fn fold_assignment(t: &[f64], folds: usize) -> Vec<usize> {
    let n = t.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| t[a].total_cmp(&t[b]).then(a.cmp(&b)));
    let mut fold = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        fold[i] = rank * folds / n;
    }
    fold
}

fn heldout_loglik(d: &Dataset, train: &[usize], test: &[usize], cfg: &ModelConfig) -> f64 {
    let result = d.subset(train).and_then(|tr| fit(&tr, cfg));
    let fitted = match result {
        Ok(f) => f,
        Err(e) => {
            log::debug!("cross-validation fit failed: {e}");
            return f64::NEG_INFINITY;
        }
    };
    let t_test: Vec<f64> = test.iter().map(|&i| d.t()[i]).collect();
    let weights = match &fitted.gating {
        GatingState::Nonparametric { curves } => curves.interpolate(&t_test),
        other => match other.weights_at(&t_test) {
            Ok(w) => w,
            Err(_) => return f64::NEG_INFINITY,
        },
    };
    let y = d.y().select_rows(test);
    let x = d.x().select_rows(test);
    let ll = mixture_loglik_raw(&y, &x, &fitted.params, &weights.map(f64::ln));
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

/// Index of the largest score, preferring the later entry on ties.
fn best_index(means: &[f64]) -> usize {
    let mut best = 0;
    for (a, &m) in means.iter().enumerate() {
        if m >= means[best] {
            best = a;
        }
    }
    best
}

/// Picks the bandwidth in `h_grid` with the highest mean held-out
/// log-likelihood over `folds` contiguous-in-`t` blocks. Ties go to the
/// larger bandwidth.
pub fn select_bandwidth_cv(
    d: &Dataset,
    k: usize,
    h_grid: &[f64],
    folds: usize,
    cfg: &ModelConfig,
) -> Result<CvReport> {
    if cfg.gating != GatingKind::Nonparametric {
        return Err(Error::Usage(
            "bandwidth selection requires a nonparametric gating model".into(),
        ));
    }
    if h_grid.is_empty() {
        return Err(Error::Usage("the bandwidth grid is empty".into()));
    }
    if h_grid.iter().any(|h| !(h.is_finite() && *h > 0.0))
        || h_grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::Usage(
            "bandwidths must be positive and strictly ascending".into(),
        ));
    }
    if folds < 2 {
        return Err(Error::Usage(format!(
            "at least two folds are required, got {folds}"
        )));
    }
    if folds > d.n() {
        return Err(Error::Usage(format!(
            "{folds} folds exceed the {} observations",
            d.n()
        )));
    }
    let assignment = fold_assignment(d.t().as_slice(), folds);
    let cells: Vec<(usize, usize)> = (0..h_grid.len())
        .flat_map(|a| (0..folds).map(move |f| (a, f)))
        .collect();
    let values: Vec<f64> = cells
        .par_iter()
        .map(|&(a, f)| {
            let mut c = cfg.clone();
            c.k = k;
            c.grid = None;
            c = match c.with_bandwidth(h_grid[a]) {
                Ok(c) => c,
                Err(_) => return f64::NEG_INFINITY,
            };
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..d.n()).partition(|&i| assignment[i] == f);
            heldout_loglik(d, &train, &test, &c)
        })
        .collect();

    let scores: Vec<BandwidthScore> = h_grid
        .iter()
        .enumerate()
        .map(|(a, &h)| {
            let fold_logliks = values[a * folds..(a + 1) * folds].to_vec();
            let mean = fold_logliks.iter().sum::<f64>() / folds as f64;
            BandwidthScore {
                h,
                fold_logliks,
                mean,
            }
        })
        .collect();
    let means: Vec<f64> = scores.iter().map(|s| s.mean).collect();
    let best = best_index(&means);
    Ok(CvReport {
        selected: scores[best].h,
        scores,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::ModelKind;

    fn data(n: usize) -> Dataset {
        let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let upper = (i * 7919) % 100
                    < (100.0 * (0.9 - 0.8 * (std::f64::consts::PI * x).sin())) as usize;
                (if upper { 4.0 + x } else { x }) + 0.5 * (((i * 31) % 13) as f64 / 6.0 - 1.0)
            })
            .collect();
        Dataset::from_columns(&y, &x, &x).unwrap()
    }

    fn cfg() -> ModelConfig {
        ModelConfig::new(ModelKind::Sgmoe, 2)
            .with_bandwidth(0.1)
            .unwrap()
            .with_restarts(2)
    }

    #[test]
    fn single_candidate_is_selected() {
        let r = select_bandwidth_cv(&data(80), 2, &[0.1], 4, &cfg()).unwrap();
        assert_eq!(r.selected, 0.1);
        assert_eq!(r.scores[0].fold_logliks.len(), 4);
        assert!(r.scores[0].mean.is_finite());
    }

    #[test]
    fn invalid_inputs_are_usage_errors() {
        let d = data(40);
        assert!(matches!(
            select_bandwidth_cv(&d, 2, &[], 4, &cfg()),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            select_bandwidth_cv(&d, 2, &[0.2, 0.1], 4, &cfg()),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            select_bandwidth_cv(&d, 2, &[0.1], 1, &cfg()),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            select_bandwidth_cv(&d, 2, &[0.1], 41, &cfg()),
            Err(Error::Usage(_))
        ));
        let parametric = ModelConfig::new(ModelKind::Cgmoe, 2);
        assert!(matches!(
            select_bandwidth_cv(&d, 2, &[0.1], 4, &parametric),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn folds_are_contiguous_blocks_in_t() {
        let t = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2];
        assert_eq!(fold_assignment(&t, 3), vec![2, 0, 1, 1, 2, 0]);
    }

    #[test]
    fn duplicated_data_keeps_copies_in_the_same_block() {
        let t: Vec<f64> = (0..20).map(|i| ((i * 13) % 20) as f64).collect();
        let doubled: Vec<f64> = t.iter().chain(t.iter()).copied().collect();
        let a = fold_assignment(&t, 5);
        let b = fold_assignment(&doubled, 5);
        for i in 0..20 {
            assert_eq!(b[i], b[i + 20]);
            assert_eq!(a[i], b[i]);
        }
    }

    #[test]
    fn ties_prefer_larger_bandwidth() {
        assert_eq!(best_index(&[-3.0, -1.0, -1.0, -2.0]), 2);
        assert_eq!(best_index(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), 1);
        assert_eq!(best_index(&[-1.0, f64::NEG_INFINITY]), 0);
    }
}
