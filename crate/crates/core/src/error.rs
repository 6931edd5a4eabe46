use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid lattice extent {0}: must be even and at least 4")]
    InvalidExtent(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("gauge file format error: {0}")]
    Format(String),

    #[error("gauge file length mismatch: header implies {expected} bytes, found {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("operator is not of Wilson type: {0}")]
    NotWilson(String),

    #[error("matrix is not Hermitian (relative asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("matrix is singular to working precision (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("dense size guard exceeded: {size} > {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("zero column {0} in Kaczmarz operator")]
    ZeroColumn(usize),

    #[error("interpolation pattern violation: {0}")]
    Pattern(String),

    #[error("solver breakdown: {0}")]
    Breakdown(String),

    #[error("iteration diverged: residual grew from {initial:e} to {current:e}")]
    Diverged { initial: f64, current: f64 },

    #[error("eigenvalue iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("level {level}: {source}")]
    Level {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at_level(self, level: usize) -> Self {
        match self {
            e @ Error::Level { .. } => e,
            e => Error::Level {
                level,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
