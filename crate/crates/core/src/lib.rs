//! Goodness-of-fit, prediction and estimation for the non-proportional
//! hazards model `λ(t | Z) = λ₀(t) exp(β(t)ᵀZ(t))`, built on the standardized
//! score process on the rank time scale.

pub mod data;
pub mod effect;
pub mod error;
pub mod fit;
pub mod kolmogorov;
pub mod linalg;
pub mod moments;
pub mod predictive;
pub mod process;
pub mod replicate;
pub mod scenarios;
pub mod simulate;
pub mod transform;

pub use data::{read_csv, validate, write_csv, CovariatePath, Subject, SurvivalDataset, ValidationReport, Violation};
pub use effect::{Basis, Effect, FnEffect, TemporalEffect};
pub use error::{Error, Result};
pub use fit::{
    fit_partial_likelihood, log_partial_likelihood, select_effect, slope_ratio_changepoint, BasisSpec, Candidate,
    CandidateSet, ComponentSpec, FitResult, RankedFit, Selection,
};
pub use kolmogorov::{kolmogorov_cdf, kolmogorov_quantile, ks_distance, ks_two_sample};
pub use linalg::{is_positive_definite, sym_matrix_power, Power, SymEigen};
pub use moments::{riskset_moments, riskset_moments_at, sigma_hat, Moments, RiskSetMoments, SigmaHat};
pub use predictive::{q_hat, r_squared, r_squared_limit_oracle, R2Result};
pub use process::{
    bridge_sup_statistic, confidence_bands, expected_drift, score_process, ConfidenceBand, ScoreProcessTrace,
};
pub use replicate::{run_replicate, run_replications, AnalysisSpec, MetricSummary, ReplicateRecord, ReplicationReport};
pub use simulate::{
    mix64, simulate_dataset, simulate_with_effect, Censoring, CovariateLaw, Generator, SimulationScenario,
};
pub use transform::{count_informative_failures, time_transform, time_transform_at, GridPoint, TransformedDataset};

/// Library version, embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
