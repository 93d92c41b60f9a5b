use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, ParamRecord};
use super::scenario::{generate, Scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimators::{fit, GatingKind, ModelConfig, ModelKind};
use crate::gating::select_bandwidth_cv;

/// How nonparametric models get their bandwidth in a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum BandwidthPolicy {
    Fixed {
        h: f64,
    },
    /// Cross-validate once per (scenario, n, model) cell on an independent
    /// pilot sample and reuse the selected bandwidth for every replication.
    PilotCv {
        h_grid: Vec<f64>,
        folds: usize,
    },
}

impl BandwidthPolicy {
    /// `0.05, 0.08, …, 0.29` with five folds.
    pub fn default_cv() -> Self {
        BandwidthPolicy::PilotCv {
            h_grid: (0..9).map(|i| 0.05 + 0.03 * i as f64).collect(),
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub scenarios: Vec<Scenario>,
    pub n_values: Vec<usize>,
    pub models: Vec<ModelKind>,
    pub reps: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub bandwidth: BandwidthPolicy,
}

impl StudySpec {
    /// The full design: four scenarios, three sample sizes, six models and
    /// 100 replications.
    pub fn paper_grid(seed: u64) -> Self {
        Self {
            scenarios: Scenario::ALL.to_vec(),
            n_values: vec![200, 500, 1000],
            models: ModelKind::ALL.to_vec(),
            reps: 100,
            seed,
            restarts: ModelConfig::DEFAULT_RESTARTS,
            max_iter: ModelConfig::DEFAULT_MAX_ITER,
            bandwidth: BandwidthPolicy::default_cv(),
        }
    }

    /// Every (scenario, n, model) cell in report order.
    pub fn cells(&self) -> Vec<(Scenario, usize, ModelKind)> {
        let mut out = Vec::new();
        for &s in &self.scenarios {
            for &n in &self.n_values {
                for &m in &self.models {
                    out.push((s, n, m));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.n_values.is_empty() || self.models.is_empty() {
            return Err(Error::Usage(
                "a study needs at least one scenario, sample size and model".into(),
            ));
        }
        if self.reps == 0 {
            return Err(Error::Usage(
                "a study needs at least one replication".into(),
            ));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < ScenarioConfig::MIN_N) {
            return Err(Error::Usage(format!(
                "sample size {n} is below {}",
                ScenarioConfig::MIN_N
            )));
        }
        match &self.bandwidth {
            BandwidthPolicy::Fixed { h } if !(h.is_finite() && *h > 0.0) => {
                Err(Error::Usage(format!("bandwidth must be positive, got {h}")))
            }
            BandwidthPolicy::PilotCv { h_grid, folds } if h_grid.is_empty() || *folds < 2 => {
                Err(Error::Usage(
                    "pilot cross-validation needs bandwidths and at least two folds".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Independent seed for a labelled substream of the master seed.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

const PILOT_INDEX: u64 = u64::MAX / 2;

fn cell_stream(scenario: Scenario, n: usize) -> u64 {
    (scenario.index() << 40) | n as u64
}

/// Replication `rep` of a (scenario, n) cell draws the same sample for
/// every model, so model comparisons are paired.
pub fn replication_seed(master: u64, scenario: Scenario, n: usize, rep: usize) -> u64 {
    derive_seed(master, cell_stream(scenario, n), rep as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub scenario: Scenario,
    pub n: usize,
    pub model: ModelKind,
    pub rep: usize,
    pub seed: u64,
    pub bandwidth: Option<f64>,
    pub error: Option<String>,
    pub loglik: Option<f64>,
    pub converged: bool,
    /// Largest `|Σ_k z_ik − 1|` over every E-step of every restart.
    pub max_row_sum_error: Option<f64>,
    pub mse_pi: Option<f64>,
    pub params: Vec<ParamRecord>,
}

/// Aggregate accuracy of one parameter over successful replications, on
/// the ×100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    /// Mean of `(θ̂ − θ)²`, ×100.
    pub mse_x100: f64,
    /// Mean of `θ̂ − θ`, ×100.
    pub bias_x100: f64,
    /// Square of the mean bias, ×100.
    pub sq_mean_bias_x100: f64,
    pub mean_estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub scenario: Scenario,
    pub n: usize,
    pub model: ModelKind,
    pub bandwidth: Option<f64>,
    pub reps: usize,
    pub failures: usize,
    pub mse_pi_mean_x100: f64,
    pub mse_pi_sd_x100: f64,
    pub params: Vec<ParamSummary>,
}

impl CellReport {
    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub spec: StudySpec,
    pub cells: Vec<CellReport>,
    pub records: Vec<ReplicationRecord>,
}

impl StudyReport {
    pub fn cell(&self, scenario: Scenario, n: usize, model: ModelKind) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.scenario == scenario && c.n == n && c.model == model)
    }
}

fn model_config(
    kind: ModelKind,
    spec: &StudySpec,
    h: Option<f64>,
    seed: u64,
) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::new(kind, 2)
        .with_restarts(spec.restarts)
        .with_max_iter(spec.max_iter)
        .with_seed(seed);
    if let Some(h) = h {
        cfg = cfg.with_bandwidth(h)?;
    }
    Ok(cfg)
}

fn cell_bandwidth(
    spec: &StudySpec,
    scenario: Scenario,
    n: usize,
    kind: ModelKind,
) -> Result<Option<f64>> {
    if kind.gating() != GatingKind::Nonparametric {
        return Ok(None);
    }
    match &spec.bandwidth {
        BandwidthPolicy::Fixed { h } => Ok(Some(*h)),
        BandwidthPolicy::PilotCv { h_grid, folds } => {
            let seed = derive_seed(spec.seed, cell_stream(scenario, n), PILOT_INDEX);
            let (d, _) = generate(&ScenarioConfig::new(scenario, n, seed)?)?;
            let cfg = model_config(kind, spec, Some(h_grid[0]), seed)?;
            let report = select_bandwidth_cv(&d, 2, h_grid, *folds, &cfg)?;
            log::info!(
                "scenario {scenario}, n={n}, {kind}: pilot bandwidth {}",
                report.selected
            );
            Ok(Some(report.selected))
        }
    }
}

fn run_replication(
    spec: &StudySpec,
    scenario: Scenario,
    n: usize,
    kind: ModelKind,
    rep: usize,
    h: Option<f64>,
) -> ReplicationRecord {
    let seed = replication_seed(spec.seed, scenario, n, rep);
    let mut record = ReplicationRecord {
        scenario,
        n,
        model: kind,
        rep,
        seed,
        bandwidth: h,
        error: None,
        loglik: None,
        converged: false,
        max_row_sum_error: None,
        mse_pi: None,
        params: Vec::new(),
    };
    let outcome = (|| {
        let (d, truth) = generate(&ScenarioConfig::new(scenario, n, seed)?)?;
        let cfg = model_config(kind, spec, h, seed)?;
        let fitted = fit(&d, &cfg)?;
        let m = compute_metrics(&fitted, &d, &truth)?;
        Ok::<_, Error>((fitted, m))
    })();
    match outcome {
        Ok((fitted, m)) => {
            record.loglik = Some(fitted.loglik);
            record.converged = fitted.converged;
            record.max_row_sum_error = fitted
                .attempts
                .iter()
                .filter_map(|a| a.max_row_sum_error)
                .reduce(f64::max);
            record.mse_pi = Some(m.mse_pi);
            record.params = m.params;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Aggregates replication records of one cell.
pub fn summarize_cell(records: &[ReplicationRecord]) -> Result<CellReport> {
    let first = records
        .first()
        .ok_or_else(|| Error::Usage("cannot summarize an empty cell".into()))?;
    let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let mse: Vec<f64> = ok
        .iter()
        .filter_map(|r| r.mse_pi)
        .map(|v| 100.0 * v)
        .collect();
    let (mse_mean, mse_sd) = mean_sd(&mse);
    let mut params = Vec::new();
    if let Some(template) = ok.first() {
        for p in template.params.iter().filter(|p| p.truth.is_some()) {
            let matching: Vec<&ParamRecord> = ok
                .iter()
                .filter_map(|r| r.params.iter().find(|q| q.name == p.name))
                .collect();
            let m = matching.len() as f64;
            let bias = matching.iter().filter_map(|q| q.bias()).sum::<f64>() / m;
            let mse = matching
                .iter()
                .filter_map(|q| q.squared_error())
                .sum::<f64>()
                / m;
            params.push(ParamSummary {
                name: p.name.clone(),
                truth: p.truth.expect("filtered"),
                mse_x100: 100.0 * mse,
                bias_x100: 100.0 * bias,
                sq_mean_bias_x100: 100.0 * bias * bias,
                mean_estimate: matching.iter().map(|q| q.estimate).sum::<f64>() / m,
            });
        }
    }
    Ok(CellReport {
        scenario: first.scenario,
        n: first.n,
        model: first.model,
        bandwidth: first.bandwidth,
        reps: records.len(),
        failures: records.len() - ok.len(),
        mse_pi_mean_x100: mse_mean,
        mse_pi_sd_x100: mse_sd,
        params,
    })
}

/// Runs every cell of `spec`. The report is identical for identical specs
/// regardless of thread scheduling.
pub fn run_study(spec: &StudySpec) -> Result<StudyReport> {
    spec.validate()?;
    let cells = spec.cells();
    let bandwidths: Vec<Option<f64>> = cells
        .par_iter()
        .map(|&(s, n, m)| cell_bandwidth(spec, s, n, m))
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.reps).map(move |r| (c, r)))
        .collect();
    let records: Vec<ReplicationRecord> = tasks
        .par_iter()
        .map(|&(c, rep)| {
            let (s, n, m) = cells[c];
            run_replication(spec, s, n, m, rep, bandwidths[c])
        })
        .collect();
    let reports = records
        .chunks(spec.reps)
        .map(summarize_cell)
        .collect::<Result<Vec<_>>>()?;
    for r in &reports {
        if r.failures > 0 {
            log::warn!(
                "scenario {}, n={}, {}: {} of {} replications failed",
                r.scenario,
                r.n,
                r.model,
                r.failures,
                r.reps
            );
        }
    }
    Ok(StudyReport {
        spec: spec.clone(),
        cells: reports,
        records,
    })
}
