use thiserror::Error;

use crate::dictionary::ColumnId;

/// Errors raised by the filter library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid arguments or configuration.
    #[error("usage error: {0}")]
    Usage(String),
    /// The input data cannot be used (non-finite values, wrong length, ...).
    #[error("data error: {0}")]
    Data(String),
    /// A non-finite value appeared while updating a coordinate.
    #[error("numerical failure at column {column}: {message}")]
    Numerical { column: ColumnId, message: String },
    /// Every column carries an infinite adaptive weight.
    #[error("no usable columns: every adaptive weight is infinite")]
    NoUsableColumns,
    /// No converged fit was available for model selection.
    #[error("selection failure: {0}")]
    Selection(String),
    /// A failure inside a path fit, tagged with its grid coordinates.
    #[error("fit failed at lambda={lambda}, gamma={gamma}: {source}")]
    Grid {
        lambda: f64,
        gamma: f64,
        #[source]
        source: Box<Error>,
    },
    /// The dense reference solver hit its iteration cap.
    #[error("oracle did not converge after {0} iterations")]
    OracleNonConvergence(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
