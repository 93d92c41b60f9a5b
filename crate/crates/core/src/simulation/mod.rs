//! Simulated two-line mixtures with covariate-dependent mixing, accuracy
//! metrics and a seeded replication runner.

pub mod contamination;
pub mod metrics;
pub mod scenario;
pub mod study;

pub use contamination::contaminate;
pub use metrics::{align_labels, compute_metrics, mixing_mse, ParamRecord, ReplicationMetrics};
pub use scenario::{generate, pi1, Scenario, ScenarioConfig, SimTruth};
pub use study::{
    derive_seed, replication_seed, run_study, summarize_cell, BandwidthPolicy, CellReport,
    ParamSummary, ReplicationRecord, StudyReport, StudySpec,
};
