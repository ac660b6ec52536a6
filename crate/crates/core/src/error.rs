use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid depth {0}")]
    InvalidDepth(f64),

    #[error("point behind camera (z = {0})")]
    BehindCamera(f64),

    #[error("rotation angle {0} is too close to pi for a stable logarithm")]
    NearSingular(f64),

    #[error("sample ({x}, {y}) outside image of size {width}x{height}")]
    SampleOutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("uncertainty provider failed for pair ({j}, {i}): {message}")]
    ProviderIo { j: usize, i: usize, message: String },

    #[error("missing ground truth: {0}")]
    MissingGroundTruth(String),

    #[error("tracking degenerate: {valid} of {total} support pixels valid")]
    TrackingDegenerate { valid: usize, total: usize },

    #[error("degenerate geometry: normal equations condition number {0:e}")]
    DegenerateGeometry(f64),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("image {}: {message}", path.display())]
    Image { path: PathBuf, message: String },

    #[error("no associable rgb/depth pairs within {max_gap} s")]
    NoAssociations { max_gap: f64 },

    #[error("insufficient overlap: {matches} matched poses")]
    InsufficientOverlap { matches: usize },

    #[error("invalid scene spec:\n  {}", .0.join("\n  "))]
    SpecValidation(Vec<String>),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
