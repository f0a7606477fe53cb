use thiserror::Error;

use crate::iterates::IterateTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// `vᵀs` is numerically zero, or no direction can be formed.
    #[error("degenerate update direction: {0}")]
    DegenerateDirection(String),

    #[error("order {0} is not supported here")]
    UnsupportedOrder(usize),

    #[error("problem too large for the dense oracle: {0}")]
    Scale(String),

    #[error("linear solve failed: {0}")]
    Solve(String),

    /// The strong-Wolfe search gave up; `partial` holds the iterates accepted so far.
    #[error("line search failed at iteration {iteration}")]
    LineSearch {
        iteration: usize,
        partial: Box<IterateTrace>,
    },

    #[error("trust-region subproblem did not converge: {0}")]
    Subproblem(String),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
