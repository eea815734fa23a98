use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate document id `{id}` at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("row ids differ between matrices at row {row}")]
    RowIdMismatch { row: usize },

    #[error("matrix has {cols} columns, more than the dense limit of {max}; cull features first")]
    TooWide { cols: usize, max: usize },

    #[error("document `{0}` has no label")]
    Unlabeled(String),

    #[error("{0}")]
    Tree(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
