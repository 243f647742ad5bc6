use cdyn_autodiff::TensorError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("quaternion norm {norm} is not within 1e-6 of 1")]
    NonUnitQuaternion { norm: f64 },
    #[error("camera matrix has a singular left 3x3 block")]
    SingularCamera,
    #[error("view {view} carries {found} masks, expected {expected}")]
    ObjectCountMismatch {
        view: usize,
        expected: usize,
        found: usize,
    },
    #[error("no views given")]
    NoViews,
    #[error("mask extent {mask:?} does not match image extent {image:?}")]
    MaskExtent {
        mask: (usize, usize),
        image: (usize, usize),
    },
    #[error("grid extent {grid:?} does not match the encoder's {expected:?}")]
    GridMismatch {
        grid: [usize; 3],
        expected: [usize; 3],
    },
    #[error("object {0} has no voxel above the density threshold")]
    VanishedObject(usize),
    #[error("latent dimension {found} does not match model dimension {expected}")]
    LatentDim { expected: usize, found: usize },
    #[error("articulated index {index} out of range for {m} objects")]
    ArticulatedIndex { index: usize, m: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
