use std::path::PathBuf;

/// Errors raised by the signal, filter and benchmark routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    /// `line` is 1-based; 0 means the error is not tied to a line.
    #[error("config error{}: {message}", line_suffix(*line))]
    Config { line: usize, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("unsupported wav format in {path}: {detail}")]
    UnsupportedWav { path: PathBuf, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed benchmark metadata: {0}")]
    Metadata(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn line_suffix(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!(" at line {line}")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
