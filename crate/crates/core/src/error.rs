use std::path::PathBuf;

use thiserror::Error;

use crate::physics::ResidualTable;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian positive definite")]
    NotPositiveDefinite,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("function values at the interval ends do not bracket a root (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    NoBracket { f_lo: f64, f_hi: f64 },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    InvalidConfig(Vec<String>),

    #[error(
        "energy requirement of EU {eu} ({required_w:e} W) reaches the harvester saturation power; \
         no RF input power can satisfy it"
    )]
    InfiniteRequirement { eu: usize, required_w: f64 },

    #[error("component index {index} out of range (0..{len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error(
        "initial point violates the problem constraints (max relative violation {max_violation:e})"
    )]
    InfeasibleStart {
        max_violation: f64,
        residuals: Box<ResidualTable>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}
