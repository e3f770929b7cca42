use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: failed to decode: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("{path}: failed to encode: {reason}")]
    Encode { path: PathBuf, reason: String },

    #[error("{path}: pixel value {value} at ({row}, {col}) is not declared in the class map")]
    UndeclaredLabel { path: PathBuf, value: u8, row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("transform emptied the lesion mask ({0})")]
    EmptyMask(String),

    #[error("crop removes every pixel of reference class {0}")]
    ReferenceCropped(u8),

    #[error("poisson solve did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("config: {0}")]
    Config(String),

    #[error("manifest {path}, line {line}: {reason}")]
    Manifest { path: PathBuf, line: usize, reason: String },

    #[error("synthesis failed: {0}")]
    Synthesis(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
