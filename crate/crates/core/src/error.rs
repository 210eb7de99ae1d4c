//! Error type shared by every module in the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while loading data, selecting designs,
/// fitting models or aggregating trials.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Filesystem failure, with the path that triggered it.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file did not match the expected format. `location` names the file
    /// and, where known, the row or column at fault.
    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },

    /// Input violated a documented contract (score out of range, duplicate
    /// ids, inconsistent manifest counts, bad configuration values).
    #[error("invalid input: {0}")]
    Validation(String),

    /// Dimension mismatch between two inputs that must agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A count or size constraint failed (m > n, too few rows, empty grid).
    #[error("size error: {0}")]
    Size(String),

    /// Numerical failure: singular matrix, non-finite intermediate value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The statistic is undefined for this input (constant vector, zero
    /// variance on both sides of a test).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Two designs refer to different candidate pools.
    #[error("pool mismatch: {0}")]
    PoolMismatch(String),

    /// Summaries need a baseline group that the trial set does not contain.
    #[error("missing baseline: {0}")]
    MissingBaseline(String),
}

impl Error {
    /// Wraps a filesystem failure with the path it happened on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            location: location.into(),
            message: message.into(),
        }
    }
}
