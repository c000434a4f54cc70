use std::path::PathBuf;

use thiserror::Error;

use crate::tensor_io::TensorError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box {0:?}")]
    InvalidBox([f64; 4]),

    /// A parameter or input violates a documented precondition.
    #[error("{0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("patch {index} has a zero-norm feature vector")]
    ZeroNormFeature { index: usize },

    #[error("missing flow {src} -> {dst} for video {video}")]
    MissingFlow {
        video: String,
        src: usize,
        dst: usize,
    },

    #[error("epoch {epoch} outside [0, {total}]")]
    EpochOutOfRange { epoch: f64, total: f64 },

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("stage {stage} failed on {video}/{frame}")]
    Stage {
        stage: &'static str,
        video: String,
        frame: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad configuration or input rather than a
    /// failure while running.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_validation(),
            e => matches!(
                e,
                Error::Invalid(_)
                    | Error::InvalidBox(_)
                    | Error::DimensionMismatch(_)
                    | Error::EpochOutOfRange { .. }
                    | Error::Json { .. }
            ),
        }
    }
}
