use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric input was outside the domain of the operation (NaN, infinity).
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller-supplied argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A value that should satisfy a structural invariant did not.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// A linear-algebra step could not be carried out (singular matrix, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An exact enumeration would exceed the configured size guard.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
