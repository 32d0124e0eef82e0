use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("size mismatch: expected {expected} samples, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("Poisson problem not solvable on the torus: mean {mean:e} is nonzero")]
    NonzeroMean { mean: f64 },

    #[error("blow-up detected at t = {t}: {reason}")]
    BlowUp { t: f64, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("grid with {n}x{n} points is too large for dense assembly (limit {limit})")]
    GridTooLarge { n: usize, limit: usize },

    #[error("bad snapshot file {}: {reason}", path.display())]
    Snapshot { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
