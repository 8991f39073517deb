use std::path::PathBuf;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scene bounds are empty")]
    EmptyBounds,

    #[error("offsets leave no temporal overlap: spread {spread} frames with {n_frames} frames available")]
    NoOverlap { spread: i64, n_frames: usize },

    #[error("camera index {index} out of range (have {count})")]
    CameraOutOfRange { index: usize, count: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite gradient for tensor `{0}`")]
    NonFiniteGradient(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("numerical abort at iteration {iteration}: {reason}; parameter norms: {norms}")]
    Diverged {
        iteration: usize,
        reason: String,
        norms: String,
    },

    #[error("invalid dataset at {path}: {reason}")]
    Dataset { path: PathBuf, reason: String },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing ground-truth offsets")]
    MissingGroundTruth,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// True for failures caused by numerical divergence rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. } | Error::NonFinite(_) | Error::NonFiniteGradient(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
