//! Gating functions: multinomial-logistic (parametric) and local-linear
//! kernel curves (nonparametric), plus cross-validated bandwidth selection.

pub mod bandwidth;
pub mod logistic;
pub mod nonparametric;

pub use bandwidth::{select_bandwidth_cv, BandwidthScore, CvReport};
pub use logistic::{fit_gating, log_softmax_gating, softmax_gating, LogisticGating};
pub use nonparametric::{
    estimate_curves, local_linear_estimate, CurveEstimator, GridSpec, KernelFamily, KernelSpec,
    LocalEstimate, NonparamGating,
};
