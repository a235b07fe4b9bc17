use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera model: {0}")]
    InvalidCamera(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid focal plane: {0}")]
    InvalidPlane(String),
    #[error("invalid camera rig: {0}")]
    InvalidRig(String),
    #[error("pixel ({0}, {1}) lies outside the camera raster")]
    PixelOutOfBounds(f64, f64),
    #[error("view ray is parallel to the focal plane")]
    RayParallelToPlane,
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("point lies behind the camera (depth {0})")]
    PointBehindCamera(f64),

    #[error("frame set is inconsistent: {0}")]
    InvalidFrameSet(String),
    #[error("no integral pixel received a contribution from any camera")]
    EmptyIntegral,
    #[error("sequence length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("too few samples for background statistics: {0} (need at least 4)")]
    TooFewSamples(usize),
    #[error("covariance matrix is singular after regularization")]
    SingularCovariance,
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("ground truth contains no targets")]
    EmptyTruth,
    #[error("raster size mismatch: {0}x{1} vs {2}x{3}")]
    RasterMismatch(usize, usize, usize, usize),

    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("occlusion density {target} unreachable within {cap} occluders (reached {reached:.4})")]
    DensityUnreachable { target: f64, reached: f64, cap: usize },

    #[error("malformed data in {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }
}
