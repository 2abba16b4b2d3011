use thiserror::Error;

/// Errors raised by the surrogate, acquisition and optimization layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DomainMismatch { expected: usize, found: usize },
    #[error("location {location:?} lies outside the domain")]
    OutOfDomain { location: Vec<f64> },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("unsupported operator pair: {0}")]
    UnsupportedOperatorPair(String),
    #[error("no measurements supplied")]
    EmptyData,
    #[error("need at least {needed} measurements, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("measurement {index} duplicates an earlier (location, operator) pair")]
    DuplicateMeasurement { index: usize },
    #[error("measurement {index} has a non-finite value")]
    NonFiniteValue { index: usize },
    #[error("Gram matrix is singular even after jitter escalation")]
    SingularGram,
    #[error("measurement set is singular given the data (eta point {index})")]
    SingularEta { index: usize },
    #[error("covariance matrix is not positive semi-definite (min eigenvalue {min_eigenvalue})")]
    NonPsd { min_eigenvalue: f64 },
    #[error("no value measurements available")]
    NoValueMeasurements,
    #[error("invalid acquisition: {0}")]
    InvalidAcquisition(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported prior: {0}")]
    UnsupportedPrior(String),
    #[error("evaluator failure after {attempts} attempt(s): {message}")]
    EvaluatorFailure { attempts: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
