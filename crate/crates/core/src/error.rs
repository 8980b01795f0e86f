use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty filter subset")]
    EmptySubset,

    #[error("filter index {index} out of range (bank has {count} filters)")]
    FilterIndexOutOfRange { index: usize, count: usize },

    #[error("filter {index} not present in {what}")]
    FilterNotCovered { index: usize, what: &'static str },

    #[error("insufficient samples: {samples} samples for {components} clusters")]
    InsufficientSamples { samples: usize, components: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: String },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("simplex violation at pixel {pixel}, filter {filter}: weights sum to {sum}")]
    SimplexViolation { pixel: usize, filter: usize, sum: f64 },

    #[error("negative weight {value} at pixel {pixel}, filter {filter}")]
    NegativeWeight { pixel: usize, filter: usize, value: f64 },

    #[error("malformed {format} data: {reason}")]
    Malformed { format: &'static str, reason: String },

    #[error("empty mask")]
    EmptyMask,

    #[error("nonpositive depth {value} at pixel {pixel}")]
    NonPositiveDepth { pixel: usize, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{}: {io}", path.display())]
    File { path: PathBuf, io: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, io: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            io,
        }
    }
}
