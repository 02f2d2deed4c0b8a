use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad class of a failure, used by front ends to pick an exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments, malformed or unsupported inputs.
    Input,
    /// Inputs were well formed but the data cannot support the computation.
    Data,
    /// Filesystem or other unexpected failures.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("missing metadata: {}", .0.display())]
    MissingMetadata(PathBuf),

    #[error("inconsistent frame dimensions: {0}")]
    InconsistentDimensions(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed file {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Argument(_)
            | Error::Dimension(_)
            | Error::Bounds(_)
            | Error::MissingMetadata(_)
            | Error::InconsistentDimensions(_)
            | Error::UnsupportedFormat(_)
            | Error::Format { .. } => ErrorKind::Input,
            Error::Degenerate(_)
            | Error::TooShort(_)
            | Error::Alignment(_)
            | Error::UndefinedCorrelation(_)
            | Error::InsufficientData(_) => ErrorKind::Data,
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                ErrorKind::Input
            }
            Error::Io { .. } => ErrorKind::Internal,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
