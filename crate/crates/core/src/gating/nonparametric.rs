//! Kernel estimation of covariate-dependent mixing proportions.
//!
//! Each curve `π_k(t)` is the regression of the responsibilities `z_ik` on
//! `t`, estimated by local-linear smoothing at a grid of local points and
//! linearly interpolated to the observations. The raw estimator is neither
//! bounded to `[0, 1]` nor guaranteed to sum to one across components, so
//! grid values are clipped to `[ε, 1 − ε]` and row-normalized.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clipping margin for estimated proportions.
pub const PROB_EPS: f64 = 1e-6;
/// Upper bound on the number of local points in a default grid.
pub const MAX_GRID_POINTS: usize = 100;
const DEGENERACY_RATIO: f64 = 1e-12;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    bandwidth: f64,
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be finite and positive, got {bandwidth}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Gaussian,
            bandwidth,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Unscaled kernel `K(u)`.
    pub fn base(&self, u: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => INV_SQRT_2PI * (-0.5 * u * u).exp(),
        }
    }

    /// Rescaled kernel `K_h(d) = K(d/h)/h`.
    pub fn eval(&self, d: f64) -> f64 {
        self.base(d / self.bandwidth) / self.bandwidth
    }
}

/// Strictly increasing local evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    points: Vec<f64>,
}

impl GridSpec {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParameter(
                "a grid needs at least two points".into(),
            ));
        }
        if points.iter().any(|v| !v.is_finite()) || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "grid points must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn uniform(lo: f64, hi: f64, m: usize) -> Result<Self> {
        if m < 2 || !(hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "cannot build a {m}-point grid over [{lo}, {hi}]"
            )));
        }
        let step = (hi - lo) / (m - 1) as f64;
        let mut points: Vec<f64> = (0..m).map(|j| lo + step * j as f64).collect();
        points[m - 1] = hi;
        Self::new(points)
    }

    /// `min(n, 100)` equally spaced points spanning the observed range.
    pub fn for_covariate(t: &[f64]) -> Result<Self> {
        let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::uniform(lo, hi, t.len().min(MAX_GRID_POINTS))
    }

    /// Sorted distinct observed values used directly as local points.
    pub fn from_observed(t: &[f64]) -> Result<Self> {
        let mut pts = t.to_vec();
        pts.sort_by(|a, b| a.partial_cmp(b).expect("finite covariate"));
        pts.dedup();
        Self::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Bracketing index and interpolation weight for `x`. Points outside the
    /// grid take the nearest end value.
    pub fn locate(&self, x: f64) -> Bracket {
        let pts = &self.points;
        let m = pts.len();
        if x <= pts[0] {
            return Bracket::Exact(0);
        }
        if x >= pts[m - 1] {
            return Bracket::Exact(m - 1);
        }
        let j = pts.partition_point(|&u| u <= x) - 1;
        if pts[j] == x {
            Bracket::Exact(j)
        } else {
            Bracket::Between(j, (x - pts[j]) / (pts[j + 1] - pts[j]))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bracket {
    Exact(usize),
    /// Lower index and weight on the upper neighbour.
    Between(usize, f64),
}

/// Mixing-proportion curves on a grid and at the observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonparamGating {
    pub grid: GridSpec,
    /// `m × K` curve values at the grid points.
    pub values: DMatrix<f64>,
    /// `n × K` curve values at the observed covariates.
    pub at_data: DMatrix<f64>,
    pub kernel: KernelSpec,
    /// Grid points where the local-linear fit fell back to local-constant.
    pub boundary_fallbacks: usize,
}

impl NonparamGating {
    pub fn k(&self) -> usize {
        self.values.ncols()
    }

    /// Uniform curves `1/K` everywhere.
    pub fn uniform(grid: GridSpec, kernel: KernelSpec, t: &[f64], k: usize) -> Self {
        let v = 1.0 / k as f64;
        Self {
            values: DMatrix::from_element(grid.len(), k, v),
            at_data: DMatrix::from_element(t.len(), k, v),
            grid,
            kernel,
            boundary_fallbacks: 0,
        }
    }

    /// Curve values at arbitrary covariate values by linear interpolation.
    pub fn interpolate(&self, ts: &[f64]) -> DMatrix<f64> {
        interpolate_rows(&self.grid, &self.values, ts)
    }
}

fn interpolate_rows(grid: &GridSpec, values: &DMatrix<f64>, ts: &[f64]) -> DMatrix<f64> {
    let k = values.ncols();
    let mut out = DMatrix::zeros(ts.len(), k);
    for (i, &x) in ts.iter().enumerate() {
        match grid.locate(x) {
            Bracket::Exact(j) => out.row_mut(i).copy_from(&values.row(j)),
            Bracket::Between(j, w) => {
                for c in 0..k {
                    out[(i, c)] = (1.0 - w) * values[(j, c)] + w * values[(j + 1, c)];
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEstimate {
    pub value: f64,
    /// True when the local design was degenerate and the local-constant
    /// estimate was returned instead.
    pub degenerate: bool,
}

/// Equivalent-kernel weights of the local-linear fit at `u`; they sum to one.
fn local_weights(t: &[f64], u: f64, kernel: &KernelSpec) -> Result<(Vec<f64>, bool)> {
    let mut kw = Vec::with_capacity(t.len());
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &ti in t {
        let d = ti - u;
        let k = kernel.eval(d);
        s0 += k;
        s1 += k * d;
        s2 += k * d * d;
        kw.push(k);
    }
    if !(s0 > 0.0) {
        return Err(Error::NoKernelMass { u });
    }
    let denom = s2 * s0 - s1 * s1;
    if denom < DEGENERACY_RATIO * s0 * s0 {
        log::warn!("local-linear design degenerate at u = {u}; using local-constant estimate");
        return Ok((kw.into_iter().map(|k| k / s0).collect(), true));
    }
    let w = kw
        .into_iter()
        .zip(t)
        .map(|(k, &ti)| (s2 - s1 * (ti - u)) * k / denom)
        .collect();
    Ok((w, false))
}

/// Intercept of the kernel-weighted linear fit of `zcol` on `t − u`.
pub fn local_linear_estimate(
    t: &[f64],
    zcol: &[f64],
    u: f64,
    kernel: &KernelSpec,
) -> Result<LocalEstimate> {
    if t.len() != zcol.len() {
        return Err(Error::Usage(format!(
            "local_linear_estimate: {} covariate values but {} responses",
            t.len(),
            zcol.len()
        )));
    }
    let (w, degenerate) = local_weights(t, u, kernel)?;
    let value = w.iter().zip(zcol).map(|(a, b)| a * b).sum();
    Ok(LocalEstimate { value, degenerate })
}

/// Precomputed local-linear smoother for a fixed covariate, grid and kernel.
///
/// Inside the ECM loop only the responsibilities change, so each curve update
/// reduces to a matrix product with the stored equivalent-kernel weights.
#[derive(Debug, Clone)]
pub struct CurveEstimator {
    grid: GridSpec,
    kernel: KernelSpec,
    /// `m × n` equivalent-kernel weights.
    weights: DMatrix<f64>,
    brackets: Vec<Bracket>,
    fallbacks: usize,
}

impl CurveEstimator {
    pub fn new(t: &[f64], grid: GridSpec, kernel: KernelSpec) -> Result<Self> {
        let rows: Vec<(Vec<f64>, bool)> = grid
            .points()
            .par_iter()
            .map(|&u| local_weights(t, u, &kernel))
            .collect::<Result<_>>()?;
        let n = t.len();
        let mut weights = DMatrix::zeros(grid.len(), n);
        let mut fallbacks = 0;
        for (j, (w, degenerate)) in rows.into_iter().enumerate() {
            fallbacks += usize::from(degenerate);
            for (i, wi) in w.into_iter().enumerate() {
                weights[(j, i)] = wi;
            }
        }
        let brackets = t.iter().map(|&x| grid.locate(x)).collect();
        Ok(Self {
            grid,
            kernel,
            weights,
            brackets,
            fallbacks,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Raw (unclipped) local-linear estimates at the grid points.
    pub fn raw_curves(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        &self.weights * z
    }

    pub fn estimate(&self, z: &DMatrix<f64>) -> Result<NonparamGating> {
        if z.nrows() != self.weights.ncols() {
            return Err(Error::Usage(format!(
                "responsibilities have {} rows, smoother expects {}",
                z.nrows(),
                self.weights.ncols()
            )));
        }
        let mut values = self.raw_curves(z);
        for mut row in values.row_iter_mut() {
            for v in row.iter_mut() {
                *v = v.clamp(PROB_EPS, 1.0 - PROB_EPS);
            }
            let s = row.sum();
            row /= s;
        }
        let k = values.ncols();
        let mut at_data = DMatrix::zeros(self.brackets.len(), k);
        for (i, b) in self.brackets.iter().enumerate() {
            match *b {
                Bracket::Exact(j) => at_data.row_mut(i).copy_from(&values.row(j)),
                Bracket::Between(j, w) => {
                    for c in 0..k {
                        at_data[(i, c)] = (1.0 - w) * values[(j, c)] + w * values[(j + 1, c)];
                    }
                }
            }
        }
        Ok(NonparamGating {
            grid: self.grid.clone(),
            values,
            at_data,
            kernel: self.kernel,
            boundary_fallbacks: self.fallbacks,
        })
    }
}

/// Local-linear curves for every column of `z` at every grid point,
/// interpolated to `t`, clipped and row-normalized.
pub fn estimate_curves(
    t: &[f64],
    z: &DMatrix<f64>,
    grid: &GridSpec,
    kernel: &KernelSpec,
) -> Result<NonparamGating> {
    CurveEstimator::new(t, grid.clone(), *kernel)?.estimate(z)
}
