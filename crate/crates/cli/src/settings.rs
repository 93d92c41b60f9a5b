//! Options shared by every command, read from flags and an optional TOML
//! file. Flags win over file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use cgmix::simulation::Scenario;
use cgmix::ModelKind;

#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Model: gmlr, cgmlr, gmoe, cgmoe, sgmoe or scgmoe.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Number of components.
    #[arg(long)]
    pub k: Option<usize>,
    /// Kernel bandwidth for nonparametric gating.
    #[arg(long)]
    pub h: Option<f64>,
    /// Candidate bandwidths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub h_grid: Option<Vec<f64>>,
    /// Cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// ECM starts per fit.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// ECM iteration cap per start
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Master random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response column.
    #[arg(long)]
    pub y_col: Option<String>,
    /// Expert covariate columns, comma separated. An intercept is added.
    #[arg(long, value_delimiter = ',')]
    pub x_cols: Option<Vec<String>>,
    /// Gating covariate column; defaults to the first expert covariate.
    #[arg(long)]
    pub t_col: Option<String>,
    /// Directory for output files; defaults to the working directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Outlier flag threshold on the non-outlier probability.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Share of rows to contaminate.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Multiplier applied to contaminated responses.
    #[arg(long)]
    pub factor: Option<f64>,
    /// Simulation scenarios, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<Scenario>>,
    /// Simulation sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n_values: Option<Vec<usize>>,
    /// Simulation models, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    /// Replications per simulation cell.
    #[arg(long)]
    pub reps: Option<usize>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        Settings { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Values of `self` where set, otherwise those of `base`.
    pub fn over(self, base: Settings) -> Settings {
        overlay!(
            base, self, model, k, h, h_grid, folds, restarts, max_iter, seed, data, y_col, x_cols,
            t_col, out_dir, threshold, fraction, factor, scenarios, n_values, models, reps
        )
    }

    pub fn resolve(self, config: Option<&Path>) -> Result<Settings> {
        match config {
            Some(p) => Ok(self.over(Settings::from_file(p)?)),
            None => Ok(self),
        }
    }

    pub fn data(&self) -> Result<&Path> {
        self.data.as_deref().context("--data is required")
    }

    pub fn y_col(&self) -> Result<&str> {
        self.y_col.as_deref().context("--y-col is required")
    }

    pub fn x_cols(&self) -> Result<&[String]> {
        match self.x_cols.as_deref() {
            Some(c) if !c.is_empty() => Ok(c),
            _ => bail!("--x-cols is required"),
        }
    }

    pub fn t_col(&self) -> Result<&str> {
        match &self.t_col {
            Some(t) => Ok(t),
            None => Ok(&self.x_cols()?[0]),
        }
    }

    pub fn model(&self) -> Result<ModelKind> {
        self.model.context("--model is required")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file: Settings =
            toml::from_str("k = 3\nseed = 9\nx_cols = [\"a\", \"b\"]\nmodel = \"cgmoe\"").unwrap();
        let flags = Settings {
            k: Some(2),
            ..Settings::default()
        };
        let s = flags.over(file);
        assert_eq!(s.k, Some(2));
        assert_eq!(s.seed, Some(9));
        assert_eq!(s.model, Some(ModelKind::Cgmoe));
        assert_eq!(s.t_col().unwrap(), "a");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<Settings>("bandwidth = 0.1")
            .unwrap_err()
            .to_string();
        assert!(err.contains("bandwidth"), "{err}");
    }
}
