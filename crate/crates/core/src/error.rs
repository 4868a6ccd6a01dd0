use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected length {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("result pulled at clock {pulled} is ahead of the server clock {current}")]
    FutureClock { pulled: u64, current: u64 },

    #[error("synchronous aggregation received a result pulled at clock {pulled}, current clock is {current}")]
    StaleSynchronous { pulled: u64, current: u64 },

    #[error("singular normal equations (rank-deficient design without ridge)")]
    Singular,

    #[error("IDX {field}: bad magic number, expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        field: &'static str,
        expected: u32,
        found: u32,
    },

    #[error("IDX {field}: file truncated")]
    Truncated { field: &'static str },

    #[error("IDX count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
