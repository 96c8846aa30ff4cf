use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A kernel parameter lies outside the family's admissible range.
    #[error("invalid parameter for {family}: {message}")]
    Parameter {
        family: &'static str,
        message: String,
    },

    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Operation not defined for this covariance family.
    #[error("operation `{operation}` does not support family {family}")]
    UnsupportedFamily {
        operation: &'static str,
        family: &'static str,
    },

    /// The kernel is neither critical nor supercritical.
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    /// Covariance matrix could not be factorized even with maximal jitter.
    #[error("covariance matrix of {kernel} on n={n}, T={horizon} is not positive semidefinite (jitter up to {max_jitter:e})")]
    NotPositiveSemidefinite {
        kernel: String,
        n: usize,
        horizon: f64,
        max_jitter: f64,
    },

    /// A variance function decreased between consecutive grid points.
    #[error("variance function decreases on [{from}, {to}]: {start} -> {end}")]
    InvalidVariance {
        from: f64,
        to: f64,
        start: f64,
        end: f64,
    },

    /// Correlation is undefined because one input has zero variance.
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    /// Experiment kind does not match the kernel's regime.
    #[error("wrong experiment: {0}")]
    WrongExperiment(String),

    /// Reading or writing a cached factor failed.
    #[error("factor cache: {0}")]
    Cache(String),
}

pub type Result<T> = std::result::Result<T, Error>;
