//! Robust mixtures of linear experts with contaminated Gaussian components.
//!
//! The crate fits six related models with one ECM engine: Gaussian or
//! contaminated Gaussian experts, combined with constant, multinomial
//! logistic or local-linear kernel gating. It also provides BIC-based model
//! comparison, two-stage clustering with outlier flags, and a simulation
//! harness.

pub mod clustering;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod gating;
pub mod regression;
pub mod selection;
pub mod simulation;

pub use clustering::{classify, classify_posteriors, ClusterReport, DEFAULT_OUTLIER_THRESHOLD};
pub use distributions::{
    contaminated_gaussian_logpdf, contaminated_gaussian_pdf, gaussian_logpdf, gaussian_pdf,
    log_sum_exp, ContaminatedGaussianParams, GaussianParams,
};
pub use error::{Error, Result};
pub use estimators::{
    fit, fit_from_start, ComponentFamily, ExpertParams, FitResult, GatingKind, GatingState,
    ModelConfig, ModelKind, Posteriors,
};
pub use gating::{
    select_bandwidth_cv, CvReport, GridSpec, KernelSpec, LogisticGating, NonparamGating,
};
pub use regression::{weighted_least_squares, weighted_sigma2, Dataset, WeightVector};
pub use selection::{bic, degrees_of_freedom, edf, parametric_df, tau_k, DegreesOfFreedom};
