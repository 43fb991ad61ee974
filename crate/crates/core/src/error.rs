use thiserror::Error;

/// Errors produced by the survscore library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("malformed input at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("no informative failures: every risk set is covariate-degenerate")]
    NoInformativeFailures,

    #[error("degenerate risk set at t = {time}: conditional covariance is not positive definite")]
    DegenerateRiskSet { time: f64 },

    #[error("matrix is singular or not positive definite")]
    SingularMatrix,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("R² denominator is zero")]
    ZeroDenominator,

    #[error("Newton-Raphson did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("monotone likelihood: estimate diverges (|beta| reached {bound:.3}) without a finite maximum")]
    MonotoneLikelihood { bound: f64 },

    #[error("observed information is rank-deficient")]
    SingularInformation,

    #[error("degenerate segment: {0}")]
    DegenerateSegment(String),

    #[error("all {} candidates failed", .0.len())]
    AllCandidatesFailed(Vec<(String, String)>),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
