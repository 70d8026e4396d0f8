use thiserror::Error;

/// Errors produced anywhere in the lifting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point at frame {frame}, joint {joint} has non-positive depth in the camera frame")]
    NonPositiveDepth { frame: usize, joint: usize },

    #[error("frame {frame}, joint {joint}: fewer than two unmasked views")]
    InsufficientViews { frame: usize, joint: usize },

    #[error("frame {frame}, joint {joint}: degenerate triangulation geometry (condition number {condition:.3e})")]
    DegenerateGeometry { frame: usize, joint: usize, condition: f64 },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid rig: {0}")]
    InvalidRig(String),

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown motion kind `{0}`")]
    UnknownKind(String),

    #[error("diffusion schedule needs at least 2 steps, got {0}")]
    BadStepCount(usize),

    #[error("model mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("dataset does not match training stage: {0}")]
    DatasetModeMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("degenerate point configuration for Procrustes alignment")]
    DegenerateConfiguration,

    #[error("sequence too short: need at least {needed} frames, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("non-finite cost encountered during optimization")]
    NonFiniteCost,

    #[error("non-finite state at denoising step {0}")]
    NonFiniteState(usize),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of a numerical nature (as opposed to I/O or usage).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveDepth { .. }
                | Error::InsufficientViews { .. }
                | Error::DegenerateGeometry { .. }
                | Error::DegenerateConfiguration
                | Error::NonFiniteCost
                | Error::NonFiniteState(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
