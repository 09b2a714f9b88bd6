use std::io;

use thiserror::Error;

/// Errors produced by tensor operations, solvers and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mode {mode} out of range for a {order}-way tensor")]
    InvalidMode { mode: usize, order: usize },
    #[error("invalid mode pair ({k1}, {k2}) for a {order}-way tensor")]
    InvalidPair { k1: usize, k2: usize, order: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("tensor file format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
