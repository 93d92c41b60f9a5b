//! Data container plus the weighted least-squares and weighted-variance
//! updates shared by every conditional-maximization step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Condition number above which `X'WX` is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Responses, expert design (leading intercept column) and scalar gating
/// covariate for `n` observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    t: DVector<f64>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, t: DVector<f64>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n || t.len() != n {
            return Err(Error::InvalidData(format!(
                "length mismatch: y has {n} rows, X has {}, t has {}",
                x.nrows(),
                t.len()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::InvalidData("design matrix has no columns".into()));
        }
        let p = x.ncols() - 1;
        if n < 2 * (p + 2) {
            return Err(Error::InvalidData(format!(
                "need at least {} observations for {} covariate(s), got {n}",
                2 * (p + 2),
                p
            )));
        }
        if x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidData(
                "first design column must be identically 1".into(),
            ));
        }
        if y.iter()
            .chain(x.iter())
            .chain(t.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidData("all entries must be finite".into()));
        }
        Ok(Self { y, x, t })
    }

    /// Builds a dataset with a single expert covariate `x` (intercept
    /// prepended) and gating covariate `t`.
    pub fn from_columns(y: &[f64], x: &[f64], t: &[f64]) -> Result<Self> {
        let n = y.len();
        if x.len() != n {
            return Err(Error::InvalidData(format!(
                "length mismatch: y has {n} rows, x has {}",
                x.len()
            )));
        }
        let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
        Self::new(
            DVector::from_column_slice(y),
            design,
            DVector::from_column_slice(t),
        )
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of expert covariates, excluding the intercept.
    pub fn p(&self) -> usize {
        self.x.ncols() - 1
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn t(&self) -> &DVector<f64> {
        &self.t
    }

    /// Gating design `[1, t]`, so q = 1.
    pub fn gating_design(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), 2, |i, j| if j == 0 { 1.0 } else { self.t[i] })
    }

    pub fn t_range(&self) -> (f64, f64) {
        let lo = self.t.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Population variance of the responses.
    pub fn y_variance(&self) -> f64 {
        let n = self.n() as f64;
        let mean = self.y.sum() / n;
        self.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
    }

    /// Default floor for component variances: `1e-8 · var(y)`.
    pub fn variance_floor(&self) -> f64 {
        (1e-8 * self.y_variance()).max(f64::MIN_POSITIVE)
    }

    /// Rows selected by `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.y[i]));
        let t = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.t[i]));
        let x = self.x.select_rows(idx);
        Self::new(y, x, t)
    }

    pub fn residuals(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.x * beta
    }
}

/// Non-negative observation weights with positive total.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(DVector<f64>);

impl WeightVector {
    pub fn new(w: DVector<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(
                "weights must be finite and non-negative".into(),
            ));
        }
        if w.sum() <= 0.0 {
            return Err(Error::InvalidParameter(
                "weights must have a positive sum".into(),
            ));
        }
        Ok(Self(w))
    }

    pub fn from_slice(w: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(w))
    }

    pub fn ones(n: usize) -> Self {
        Self(DVector::from_element(n, 1.0))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.sum()
    }
}

/// Minimizes `Σ w_i (y_i − x_iᵀβ)²` by a QR factorization of `√W X`.
pub fn weighted_least_squares(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &WeightVector,
) -> Result<DVector<f64>> {
    let (n, cols) = x.shape();
    if y.len() != n || w.len() != n {
        return Err(Error::Usage(format!(
            "weighted_least_squares: X is {n}x{cols}, y has {}, w has {}",
            y.len(),
            w.len()
        )));
    }
    let sw = w.as_vector().map(f64::sqrt);
    let mut a = x.clone();
    for (mut row, s) in a.row_iter_mut().zip(sw.iter()) {
        row *= *s;
    }
    let b = y.component_mul(&sw);
    // Padding keeps the QR well-formed when fewer than p+1 rows carry weight.
    let (a, b) = if n < cols {
        let mut a2 = DMatrix::zeros(cols, cols);
        a2.rows_mut(0, n).copy_from(&a);
        let mut b2 = DVector::zeros(cols);
        b2.rows_mut(0, n).copy_from(&b);
        (a2, b2)
    } else {
        (a, b)
    };

    let qr = a.qr();
    let r = qr.r();
    debug_assert_eq!(r.nrows(), cols);
    let singular = r.singular_values();
    let smax = singular.max();
    let smin = singular.min();
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition.is_finite() && condition <= MAX_CONDITION) {
        return Err(Error::SingularDesign {
            condition,
            component: None,
        });
    }
    let mut qtb = b;
    qr.q_tr_mul(&mut qtb);
    let rhs = qtb.rows(0, cols).into_owned();
    r.solve_upper_triangular(&rhs).ok_or(Error::SingularDesign {
        condition,
        component: None,
    })
}

/// `Σ w_i r_i² / n_k`, floored at `floor`.
pub fn weighted_sigma2(
    residuals: &DVector<f64>,
    w: &WeightVector,
    n_k: f64,
    floor: f64,
) -> Result<f64> {
    if !(n_k > 0.0) {
        return Err(Error::EmptyComponent { component: 0, n_k });
    }
    if residuals.len() != w.len() {
        return Err(Error::Usage(format!(
            "weighted_sigma2: {} residuals but {} weights",
            residuals.len(),
            w.len()
        )));
    }
    let ss: f64 = residuals
        .iter()
        .zip(w.as_vector().iter())
        .map(|(r, wi)| wi * r * r)
        .sum();
    Ok((ss / n_k).max(floor))
}
