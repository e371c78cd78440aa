use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("gaussian product has non-positive precision {precision}")]
    DegenerateProduct { precision: f64 },

    #[error("conditioning on a coordinate with variance {variance}")]
    SingularConditioning { variance: f64 },

    #[error("probit normalizer underflowed at z = {z}")]
    NumericalUnderflow { z: f64 },

    #[error("gram matrix is not positive definite after jitter {jitter:e}")]
    GramNotPD { jitter: f64 },

    #[error("predictive variance radicand {radicand} is not positive")]
    NegativePredictiveVariance { radicand: f64 },

    #[error("adaptive quadrature did not reach {tolerance:e} within {evaluations} evaluations")]
    QuadratureFailure { tolerance: f64, evaluations: usize },

    #[error("conditioning denominator {denominator:e} is below 1e-12")]
    DegenerateConditioning { denominator: f64 },

    #[error("hyperparameter search failed at every grid point")]
    AllFitsFailed,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("pilot matrix is singular or ill-conditioned (condition number {condition:e})")]
    SingularPilot { condition: f64 },

    #[error("unlabeled pool exhausted after {iterations} iterations")]
    PoolExhausted { iterations: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("figure {figure} requires a {needed} sweep")]
    MissingSweep { figure: String, needed: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
