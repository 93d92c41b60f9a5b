use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::{GridSpec, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentFamily {
    Gaussian,
    Contaminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatingKind {
    Constant,
    Logistic,
    Nonparametric,
}

/// The six fitted model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Gaussian mixture of linear regressions.
    Gmlr,
    /// Contaminated Gaussian mixture of linear regressions.
    Cgmlr,
    /// Gaussian mixture of linear experts (logistic gating).
    Gmoe,
    /// Contaminated Gaussian mixture of linear experts.
    Cgmoe,
    /// Gaussian experts with nonparametric gating.
    Sgmoe,
    /// Contaminated Gaussian experts with nonparametric gating.
    Scgmoe,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Gmlr,
        ModelKind::Cgmlr,
        ModelKind::Gmoe,
        ModelKind::Cgmoe,
        ModelKind::Sgmoe,
        ModelKind::Scgmoe,
    ];

    pub fn family(self) -> ComponentFamily {
        match self {
            ModelKind::Gmlr | ModelKind::Gmoe | ModelKind::Sgmoe => ComponentFamily::Gaussian,
            ModelKind::Cgmlr | ModelKind::Cgmoe | ModelKind::Scgmoe => {
                ComponentFamily::Contaminated
            }
        }
    }

    pub fn gating(self) -> GatingKind {
        match self {
            ModelKind::Gmlr | ModelKind::Cgmlr => GatingKind::Constant,
            ModelKind::Gmoe | ModelKind::Cgmoe => GatingKind::Logistic,
            ModelKind::Sgmoe | ModelKind::Scgmoe => GatingKind::Nonparametric,
        }
    }

    pub fn from_parts(family: ComponentFamily, gating: GatingKind) -> Self {
        match (family, gating) {
            (ComponentFamily::Gaussian, GatingKind::Constant) => ModelKind::Gmlr,
            (ComponentFamily::Contaminated, GatingKind::Constant) => ModelKind::Cgmlr,
            (ComponentFamily::Gaussian, GatingKind::Logistic) => ModelKind::Gmoe,
            (ComponentFamily::Contaminated, GatingKind::Logistic) => ModelKind::Cgmoe,
            (ComponentFamily::Gaussian, GatingKind::Nonparametric) => ModelKind::Sgmoe,
            (ComponentFamily::Contaminated, GatingKind::Nonparametric) => ModelKind::Scgmoe,
        }
    }

    /// Short identifier used on the command line and in reports.
    pub fn id(self) -> &'static str {
        match self {
            ModelKind::Gmlr => "gmlr",
            ModelKind::Cgmlr => "cgmlr",
            ModelKind::Gmoe => "gmoe",
            ModelKind::Cgmoe => "cgmoe",
            ModelKind::Sgmoe => "sgmoe",
            ModelKind::Scgmoe => "scgmoe",
        }
    }

    /// Table-style display label.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Gmlr => "GMLRs",
            ModelKind::Cgmlr => "CGMLRs",
            ModelKind::Gmoe => "GMoE",
            ModelKind::Cgmoe => "CG-MoE",
            ModelKind::Sgmoe => "S-G-MoE",
            ModelKind::Scgmoe => "S-CG-MoE",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|m| m.id() == lower)
            .ok_or_else(|| {
                Error::Usage(format!(
                    "unknown model '{s}'; expected one of {}",
                    ModelKind::ALL.map(|m| m.id()).join(", ")
                ))
            })
    }
}

/// Estimation settings shared by all six models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub k: usize,
    pub family: ComponentFamily,
    pub gating: GatingKind,
    /// Required for, and only for, nonparametric gating.
    pub kernel: Option<KernelSpec>,
    /// Local points for nonparametric gating; `None` uses `min(n, 100)`
    /// equally spaced points over the observed range.
    pub grid: Option<GridSpec>,
    pub max_iter: usize,
    /// Relative observed log-likelihood change that stops the iteration.
    pub tol: f64,
    pub n_restarts: usize,
    pub seed: u64,
    pub eta_bounds: (f64, f64),
    pub alpha_bounds: (f64, f64),
}

impl ModelConfig {
    pub const DEFAULT_MAX_ITER: usize = 500;
    pub const DEFAULT_TOL: f64 = 1e-8;
    pub const DEFAULT_RESTARTS: usize = 10;
    pub const DEFAULT_ETA_BOUNDS: (f64, f64) = (1.0 + 1e-6, 1e6);
    pub const DEFAULT_ALPHA_BOUNDS: (f64, f64) = (0.01, 0.99);

    /// Defaults for `kind`; nonparametric kinds still need a bandwidth.
    pub fn new(kind: ModelKind, k: usize) -> Self {
        Self {
            k,
            family: kind.family(),
            gating: kind.gating(),
            kernel: None,
            grid: None,
            max_iter: Self::DEFAULT_MAX_ITER,
            tol: Self::DEFAULT_TOL,
            n_restarts: Self::DEFAULT_RESTARTS,
            seed: 0,
            eta_bounds: Self::DEFAULT_ETA_BOUNDS,
            alpha_bounds: Self::DEFAULT_ALPHA_BOUNDS,
        }
    }

    pub fn kind(&self) -> ModelKind {
        ModelKind::from_parts(self.family, self.gating)
    }

    pub fn with_bandwidth(mut self, h: f64) -> Result<Self> {
        self.kernel = Some(KernelSpec::gaussian(h)?);
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, n: usize) -> Self {
        self.n_restarts = n;
        self
    }

    pub fn with_max_iter(mut self, n: usize) -> Self {
        self.max_iter = n;
        self
    }

    pub fn with_grid(mut self, grid: GridSpec) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("K must be at least 1".into()));
        }
        match (self.gating, self.kernel.is_some()) {
            (GatingKind::Nonparametric, false) => {
                return Err(Error::InvalidParameter(
                    "nonparametric gating requires a bandwidth".into(),
                ))
            }
            (GatingKind::Constant | GatingKind::Logistic, true) => {
                return Err(Error::InvalidParameter(
                    "a kernel is only meaningful for nonparametric gating".into(),
                ))
            }
            _ => {}
        }
        if self.n_restarts == 0 {
            return Err(Error::InvalidParameter(
                "at least one start is required".into(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        let (alo, ahi) = self.alpha_bounds;
        if !(0.0 < alo && alo <= ahi && ahi < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "invalid alpha bounds {:?}",
                self.alpha_bounds
            )));
        }
        let (elo, ehi) = self.eta_bounds;
        if !(1.0 < elo && elo <= ehi && ehi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "invalid eta bounds {:?}",
                self.eta_bounds
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip_through_parts_and_ids() {
        for kind in ModelKind::ALL {
            assert_eq!(ModelKind::from_parts(kind.family(), kind.gating()), kind);
            assert_eq!(kind.id().parse::<ModelKind>().unwrap(), kind);
        }
        let err = "tmoe".parse::<ModelKind>().unwrap_err();
        assert!(err.to_string().contains("scgmoe"));
    }

    #[test]
    fn kernel_presence_matches_gating() {
        assert!(ModelConfig::new(ModelKind::Scgmoe, 2).validate().is_err());
        assert!(ModelConfig::new(ModelKind::Scgmoe, 2)
            .with_bandwidth(0.1)
            .unwrap()
            .validate()
            .is_ok());
        assert!(ModelConfig::new(ModelKind::Cgmoe, 2)
            .with_bandwidth(0.1)
            .unwrap()
            .validate()
            .is_err());
        assert!(ModelConfig::new(ModelKind::Gmlr, 0).validate().is_err());
    }
}
