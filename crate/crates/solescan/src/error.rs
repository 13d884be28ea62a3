//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operation requires a non-empty input")]
    EmptyInput,

    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    /// The projection itself is valid; the pixel just falls outside the
    /// image. Callers that only need the pixel/depth can recover them
    /// from the payload.
    #[error("projected pixel ({x:.3}, {y:.3}) is outside the image")]
    OutOfFrame { x: f64, y: f64, depth: f64 },

    #[error("depth must be positive, got {0}")]
    InvalidDepth(f64),

    #[error("{path}: parse error at {location}: {message}")]
    Parse {
        path: PathBuf,
        /// Line number for text formats, byte offset for binary ones.
        location: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("need at least 3 landmarks with valid observations, got {got}")]
    InsufficientLandmarks { got: usize },

    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("no ICP correspondences within the distance bound")]
    NoCorrespondences,

    #[error("camera rig constraints leave no feasible viewing directions")]
    InfeasibleRig,

    #[error("virtual scan produced no valid points")]
    EmptyScan,

    #[error("synthesized shape self-intersects")]
    DegenerateShape,

    #[error("vertex correspondence mismatch: {0}")]
    CorrespondenceError(String),

    #[error("fit diverged: loss became non-finite at step {step}")]
    DivergedFit { step: usize },

    #[error("training diverged: loss became non-finite at step {step}")]
    DivergedTraining { step: usize },

    #[error("tensor shape mismatch: {0}")]
    ShapeError(String),

    #[error("non-finite value encountered in {0}")]
    NumericalError(&'static str),

    #[error("isosurface does not cross the grid")]
    EmptyMesh,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 usage, 3 i/o, 4 algorithmic failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            Error::Io { .. } | Error::Parse { .. } => 3,
            _ => 4,
        }
    }
}
