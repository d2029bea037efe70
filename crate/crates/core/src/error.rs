use thiserror::Error;

use crate::qp::ConvergenceReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("resolution mismatch: {from} and {to} are not integer multiples")]
    ResolutionMismatch { from: usize, to: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The reduced Newton system could not be solved to the requested accuracy.
    #[error("linear solve failed ({reason}), relative residual {residual:.3e}")]
    LinearSolve { reason: String, residual: f64 },

    #[error("interior-point solver failed after {} iterations: {reason}", report.iterations)]
    SolverFailure {
        reason: String,
        report: Box<ConvergenceReport>,
    },

    /// No regularization parameter met the stability threshold.
    #[error("no stable alpha at tolerance {tolerance}")]
    NoSelection { tolerance: f64, spread: Vec<f64> },

    #[error("target {target} lies outside the curve range [{min}, {max}]")]
    OutOfRange { target: f64, min: f64, max: f64 },

    #[error("degenerate prior image {index}: zero projection")]
    DegeneratePrior { index: usize },

    #[error("incomplete sweep table: {0}")]
    IncompleteTable(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }
}
