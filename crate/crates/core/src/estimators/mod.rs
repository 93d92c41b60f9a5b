//! One ECM engine covering the six models: Gaussian or contaminated
//! experts combined with constant, logistic or nonparametric gating.

pub mod config;
pub mod ecm;
pub mod init;
pub mod model;
pub mod steps;

pub use config::{ComponentFamily, GatingKind, ModelConfig, ModelKind};
pub use ecm::{fit, fit_from_start, AttemptSummary, BoundaryStatus, FitResult};
pub use init::{attempt_rng, initialize};
pub use model::{ExpertParams, GatingState, Posteriors};
pub use steps::{
    cm_step1, cm_step2_eta, e_step, eta_update, observed_loglik, residual_matrix, EStep,
};
