use std::path::PathBuf;

/// Errors raised by the fusion library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A malformed line in one of the text input formats.
    #[error("{}line {line}: {message}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    /// Hyperparameters or model geometry out of range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data that is well-formed but unusable for the requested operation.
    #[error("{0}")]
    Data(String),

    /// NaN or infinite values produced during computation.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: None,
            line,
            message: message.into(),
        }
    }

    pub(crate) fn with_path(self, path: impl Into<PathBuf>) -> Self {
        match self {
            Error::Parse { line, message, .. } => Error::Parse {
                path: Some(path.into()),
                line,
                message,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
