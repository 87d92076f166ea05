use std::path::PathBuf;

/// Errors raised across the terrain pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("no usable data: {0}")]
    EmptyData(String),

    #[error("fetch failed for polygon {polygon}: {message}")]
    Fetch {
        polygon: String,
        message: String,
        retryable: bool,
    },

    #[error("missing imagery fixture for digest {0}")]
    MissingFixture(String),

    #[error("corrupt data: {0}")]
    Corruption(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Broad class of the error, used by front ends to pick exit statuses.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::Parse { .. }
            | Error::EmptyData(_)
            | Error::Fetch { .. }
            | Error::MissingFixture(_)
            | Error::Corruption(_)
            | Error::Io { .. } => ErrorKind::Data,
            Error::InvalidShape(_) | Error::Shape(_) | Error::Contract(_) | Error::State(_) => {
                ErrorKind::Contract
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Contract,
}
