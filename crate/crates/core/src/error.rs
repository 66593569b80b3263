use thiserror::Error;

/// Dataset construction and ingestion failures.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unrecognised header {0:?}")]
    Header(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("study {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("invalid 2x2 counts: {0}")]
    InvalidCounts(String),
    #[error("duplicate study id {0:?}")]
    DuplicateId(String),
    #[error("at least two published studies are required, found {0}")]
    TooFewPublished(usize),
}

/// Numerical failures in estimation and inference.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("selection family {family} has arity {expected}, got beta of length {got}")]
    Arity {
        family: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("estimating equation has constant sign on [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },
    #[error("estimates did not converge; refusing to compute {0}")]
    NotConverged(&'static str),
    #[error("Jacobian of the stacked estimating equations is singular")]
    SingularJacobian,
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("every bootstrap replicate failed ({0} attempted)")]
    AllReplicatesFailed(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Simulation configuration and replicate-level failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
    #[error("selection left {published} published studies; at least two are needed")]
    AllSuppressed { published: usize },
}
