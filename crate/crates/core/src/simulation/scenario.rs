use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::Dataset;

/// Error distributions of the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Standard normal errors.
    A,
    /// `0.95 N(0, 1) + 0.05 N(0, 20)` errors.
    B,
    /// Student t errors with 3 degrees of freedom.
    C,
    /// Standard normal errors, then 10% of responses replaced by
    /// `U(−15, 15)` noise.
    D,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::A, Scenario::B, Scenario::C, Scenario::D];

    pub fn id(self) -> &'static str {
        match self {
            Scenario::A => "a",
            Scenario::B => "b",
            Scenario::C => "c",
            Scenario::D => "d",
        }
    }

    pub(crate) fn index(self) -> u64 {
        match self {
            Scenario::A => 0,
            Scenario::B => 1,
            Scenario::C => 2,
            Scenario::D => 3,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Scenario::ALL
            .into_iter()
            .find(|c| c.id() == lower)
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown scenario '{s}'; expected one of {}",
                    Scenario::ALL.map(|c| c.id()).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    pub const MIN_N: usize = 50;

    pub fn new(scenario: Scenario, n: usize, seed: u64) -> Result<Self> {
        if n < Self::MIN_N {
            return Err(Error::InvalidParameter(format!(
                "simulated samples need at least {} observations, got {n}",
                Self::MIN_N
            )));
        }
        Ok(Self { scenario, n, seed })
    }
}

/// Mixing proportion of the first component, `0.1 + 0.8 sin(πx)`.
pub fn pi1(x: f64) -> f64 {
    0.1 + 0.8 * (PI * x).sin()
}

/// Ground truth of one simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub scenario: Scenario,
    /// Rows `(β_k0, β_k1)`: `(0, 1)` and `(4, 1)`.
    pub beta: DMatrix<f64>,
    /// Error scale of the typical observations in each component.
    pub sigma: [f64; 2],
    /// Contamination parameters when the errors follow a contaminated
    /// Gaussian.
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    /// Zero-based generating component per observation.
    pub z: Vec<usize>,
    /// `n × 2` true mixing proportions at the observations.
    pub pi: DMatrix<f64>,
    /// Observations whose response was replaced by uniform noise.
    pub replaced: Vec<usize>,
}

impl SimTruth {
    pub fn k(&self) -> usize {
        self.beta.nrows()
    }
}

pub const NOISE_HALF_WIDTH: f64 = 15.0;
pub const CONTAMINATION_ALPHA: f64 = 0.95;
pub const CONTAMINATION_ETA: f64 = 20.0;
pub const T_DF: f64 = 3.0;

/// Draws one sample. The gating covariate equals the expert covariate.
pub fn generate(cfg: &ScenarioConfig) -> Result<(Dataset, SimTruth)> {
    let cfg = ScenarioConfig::new(cfg.scenario, cfg.n, cfg.seed)?;
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let beta = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 4.0, 1.0]);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let inflated = Normal::new(0.0, CONTAMINATION_ETA.sqrt()).expect("valid normal");
    let student = StudentT::new(T_DF).expect("valid t");

    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: f64 = rng.random();
        let zi = if rng.random::<f64>() < pi1(xi) { 0 } else { 1 };
        let eps = match cfg.scenario {
            Scenario::A | Scenario::D => std_normal.sample(&mut rng),
            Scenario::B => {
                if rng.random::<f64>() < CONTAMINATION_ALPHA {
                    std_normal.sample(&mut rng)
                } else {
                    inflated.sample(&mut rng)
                }
            }
            Scenario::C => student.sample(&mut rng),
        };
        x.push(xi);
        y.push(beta[(zi, 0)] + beta[(zi, 1)] * xi + eps);
        z.push(zi);
    }
    let mut replaced = Vec::new();
    if cfg.scenario == Scenario::D {
        replaced = sample(&mut rng, n, n / 10).into_vec();
        replaced.sort_unstable();
        for &i in &replaced {
            y[i] = rng.random_range(-NOISE_HALF_WIDTH..NOISE_HALF_WIDTH);
        }
    }
    let pi = DMatrix::from_fn(
        n,
        2,
        |i, k| if k == 0 { pi1(x[i]) } else { 1.0 - pi1(x[i]) },
    );
    let contaminated = cfg.scenario == Scenario::B;
    let truth = SimTruth {
        scenario: cfg.scenario,
        beta,
        sigma: [1.0, 1.0],
        alpha: contaminated.then_some(CONTAMINATION_ALPHA),
        eta: contaminated.then_some(CONTAMINATION_ETA),
        z,
        pi,
        replaced,
    };
    Ok((Dataset::from_columns(&y, &x, &x)?, truth))
}
