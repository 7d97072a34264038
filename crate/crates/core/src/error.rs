use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The constraint polyhedron of a scenario program is empty.
    #[error("scenario program is infeasible (violated constraint {constraint})")]
    Infeasible { constraint: usize },

    /// The solver hit its iteration cap; the best iterate found so far is attached.
    #[error("solver reached the iteration limit ({iterations})")]
    MaxIterations { iterations: usize, best: Vec<f64> },

    #[error("evaluation mode does not match the baseline: {0}")]
    ModeMismatch(String),

    #[error(
        "candidate measure puts mass {mass} on support point {index} where the baseline has none"
    )]
    AbsoluteContinuity { index: usize, mass: f64 },

    #[error("no grid decision satisfies the chance constraint")]
    NoFeasibleDecision,

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed trace at line {line}: {message}")]
    Trace { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
