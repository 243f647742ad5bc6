use cdyn_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("could not place object {object} of {requested} after {attempts} rejected samples")]
    Crowded {
        object: usize,
        requested: usize,
        attempts: usize,
    },
    #[error("a scene needs at least one box, got {0}")]
    NoObjects(usize),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: String,
        source: image::ImageError,
    },
    #[error("malformed {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("malformed dataset: {0}")]
    Format(String),
}

pub type Result<T, E = SceneError> = std::result::Result<T, E>;
