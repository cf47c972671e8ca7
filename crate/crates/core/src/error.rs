use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is singular within tolerance (|det| = {det:e}, threshold {threshold:e})")]
    Singular { det: f64, threshold: f64 },

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("matrix logarithm undefined: ||a - I||_F = {norm} is not below 1")]
    LogDomain { norm: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("invalid chart: {0}")]
    InvalidChart(String),

    #[error("point lies outside the chart domain (norm {norm}, radius {radius})")]
    OutsideChart { norm: f64, radius: f64 },

    #[error("invalid law: {0}")]
    InvalidLaw(String),

    #[error("sampler failed: {0}")]
    Sampler(String),

    #[error("Monte-Carlo budget {budget} is below the minimum of {min}")]
    BudgetTooSmall { budget: usize, min: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("law at index {n} is not atomic")]
    NonAtomic { n: u64 },

    #[error("simulation failed at n = {n}, path {path}: {source}")]
    Simulation {
        n: u64,
        path: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
