use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    LexiconParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("training diverged: non-finite loss at epoch {epoch} (beta = {beta})")]
    Diverged { epoch: usize, beta: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (bad flags, missing or malformed
    /// files); false for internal/numeric failures. Drives the CLI exit code.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Diverged { .. } | Error::NonFinite(_))
    }
}
