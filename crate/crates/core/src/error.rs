use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error at line {line}, column {column}: {message}")]
    Format {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("world contains no free cell")]
    EmptyWorld,
    #[error("pose ({x:.3}, {y:.3}) is not inside a free cell")]
    InvalidPose { x: f64, y: f64 },
    #[error("path collides with occupied cell (row {row}, col {col})")]
    Collision { row: usize, col: usize },
    #[error("point ({x:.3}, {y:.3}) lies outside the grid")]
    OutOfBounds { x: f64, y: f64 },
    #[error("grid geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("planner start ({x:.3}, {y:.3}) is not a free cell")]
    InvalidStart { x: f64, y: f64 },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("cannot access {path}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
