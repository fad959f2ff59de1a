use std::io;

use thiserror::Error;

/// Errors shared across the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("index out of bounds: {0}")]
    OutOfBounds(String),

    #[error("range mismatch: {0}")]
    RangeMismatch(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("empty warp path")]
    EmptyPath,

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("beat count mismatch: reference has {reference}, live has {live}")]
    BeatCountMismatch { reference: usize, live: usize },

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("socket error: {0}")]
    Socket(String),
}

pub type Result<T> = std::result::Result<T, Error>;
