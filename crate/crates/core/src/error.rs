use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("input resolution {got_w}x{got_h}x{got_c} does not match model input {want_w}x{want_h}x{want_c}")]
    ResolutionMismatch {
        got_w: usize,
        got_h: usize,
        got_c: usize,
        want_w: usize,
        want_h: usize,
        want_c: usize,
    },

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("checkpoint has bad magic bytes")]
    BadMagic,

    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),

    #[error("checkpoint was written for a different model config")]
    ConfigMismatch,

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("dataset/config mismatch: {0}")]
    DatasetMismatch(String),

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::InvalidConfig(_) => "invalid_config",
            Error::ResolutionMismatch { .. } => "resolution_mismatch",
            Error::Generation(_) => "generation",
            Error::OutOfRange(_) => "out_of_range",
            Error::BadMagic => "bad_magic",
            Error::UnsupportedVersion(_) => "unsupported_version",
            Error::ConfigMismatch => "config_mismatch",
            Error::CorruptCheckpoint(_) => "corrupt_checkpoint",
            Error::VocabularyMismatch(_) => "vocabulary_mismatch",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::DatasetMismatch(_) => "dataset_mismatch",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Image(_) => "image",
        }
    }
}
