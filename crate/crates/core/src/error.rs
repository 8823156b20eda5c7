//! Error types shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
///
/// The variants map onto process exit codes in the CLI: validation problems
/// (bad arguments, malformed domain objects, catalog mismatches) exit with 2,
/// numeric and solver failures with 3, and I/O or file-format problems with 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument or domain object violated a documented invariant.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// A computation produced non-finite values or is otherwise numerically unusable.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The solver failed to make progress (divergence, non-finite loss).
    #[error("solver error at iteration {iteration}: {message}")]
    Solver { iteration: usize, message: String },

    /// Reading or writing a file failed.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file was readable but its contents did not parse or match the schema.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
