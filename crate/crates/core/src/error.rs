use thiserror::Error;

use crate::matrix::MatrixError;

/// Failures raised by model families (simulation, likelihood, fitting).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid order: {0}")]
    InvalidOrder(String),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("need more than {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("parameters are not stationary (spectral radius {rho})")]
    NonStationary { rho: f64 },
    #[error("conditional covariance at t={t} is numerically singular: {reason}")]
    SingularCovariance { t: usize, reason: String },
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Errors from order selection.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("lattice dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid penalty rule: {0}")]
    Penalty(#[from] PenaltyError),
    #[error("sample too short for the search bound: need at least {needed}, got {got}")]
    SampleTooShort { needed: usize, got: usize },
    #[error("every candidate fit failed ({count} candidates)")]
    AllFitsFailed { count: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PenaltyError {
    #[error("penalty scale must be positive and finite, got {0}")]
    NonPositiveScale(f64),
    #[error("penalty exponents must be finite")]
    NonFiniteExponent,
    #[error("cannot parse penalty rule '{0}'")]
    Parse(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrderError {
    #[error("order index needs at least one coordinate")]
    Empty,
    #[error("cannot compare orders of dimension {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("cannot parse order index '{0}'")]
    Parse(String),
}

/// Errors from BEKK estimation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid fit options: {0}")]
    Options(String),
    #[error("all {count} starts failed for order ({k1},{k2}): {first}")]
    AllStartsFailed {
        k1: usize,
        k2: usize,
        count: usize,
        first: String,
    },
}
