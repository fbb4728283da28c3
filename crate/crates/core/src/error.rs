//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data (ragged CSV rows, bad encodings, ...).
    #[error("format error: {0}")]
    Format(String),

    /// An input that must be non-empty was empty.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// An argument violated a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A tree operation would break structural invariants.
    #[error("structural error: {0}")]
    Structure(String),

    /// An objective score is undefined for the given partition
    /// (a normalization denominator is zero).
    #[error("undefined score: {0}")]
    UndefinedScore(String),

    /// A placement would exceed the tree's height bound.
    #[error("height bound exceeded: {0}")]
    Bound(String),

    /// Bad experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
