use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} {value} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("ego pose ({x:.3}, {y:.3}) lies outside the grid extent")]
    PoseOutsideGrid { x: f64, y: f64 },

    #[error("enlarged ego grid does not cover the allo grid; uncovered world region x∈[{min_x:.2}, {max_x:.2}] y∈[{min_y:.2}, {max_y:.2}]")]
    Coverage {
        min_x: f64,
        max_x: f64,
        min_y: f64,
        max_y: f64,
    },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("metric undefined over an empty mask")]
    EmptyMask,

    #[error("malformed dataset at {path}: {reason}")]
    Layout { path: PathBuf, reason: String },

    #[error("external predictor failed: {0}")]
    External(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
