use std::path::PathBuf;

use crate::ClassId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("class id {id} is not in the catalog ({context})")]
    UnknownClassId { id: u32, context: String },

    #[error("invalid class catalog: {0}")]
    InvalidCatalog(String),

    #[error("images without a matching mask: {}", stems.join(", "))]
    MissingMask { stems: Vec<String> },

    #[error("{image_id}: image is {image_w}x{image_h} but mask is {mask_w}x{mask_h}")]
    DimensionMismatch {
        image_id: String,
        image_w: u32,
        image_h: u32,
        mask_w: u32,
        mask_h: u32,
    },

    #[error("split `{split}` under {root} contains no images")]
    EmptySplit { root: PathBuf, split: String },

    #[error("failed to decode {what}: {message}")]
    Decode { what: String, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("checkpoint does not match the model architecture: {0}")]
    CheckpointMismatch(String),

    #[error("model exposes no gradient access at the final normalization layer")]
    NoGradientAccess,

    #[error("class {class_id}: activation map is zero everywhere")]
    NoActivation { class_id: ClassId },

    #[error("class {class_id}: segmentation backend returned no masks")]
    EmptyProposal { class_id: ClassId },

    #[error("no evaluation records to aggregate")]
    EmptyEvaluation,

    #[error("segmentation backend: {0}")]
    Backend(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}

/// Attach a path to an io error.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
