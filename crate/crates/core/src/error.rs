use thiserror::Error;

/// Crate-wide error type. The variants map onto the CLI exit codes:
/// config errors exit 1, training divergence exits 2, I/O exits 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training divergence: {0}")]
    TrainingDivergence(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data: {0}")]
    Malformed(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => 1,
            Error::TrainingDivergence(_) => 2,
            Error::Io { .. } | Error::Malformed(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
