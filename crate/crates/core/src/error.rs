use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("cosine similarity is undefined for a zero vector")]
    UndefinedSimilarity,

    #[error("missing symbol `{0}`")]
    MissingSymbol(String),

    #[error("space `{0}` is frozen")]
    FrozenSpace(String),

    #[error("unknown name `{name}` in triplet {index}")]
    UnknownName { name: String, index: usize },

    #[error("duplicate triplet ({head}, {relation}, {tail})")]
    DuplicateTriplet {
        head: String,
        relation: String,
        tail: String,
    },

    #[error("duplicate concept name `{0}`")]
    DuplicateName(String),

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: wrong IDX magic 0x{found:08x}, expected 0x{expected:08x}")]
    WrongMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("{path}: truncated IDX file ({found} bytes, expected {expected})")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
