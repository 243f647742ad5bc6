use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("conv3d: output extent {extent} < 1 (input {input:?}, stride {stride}, padding {padding})")]
    ConvExtent {
        extent: isize,
        input: Vec<usize>,
        stride: usize,
        padding: usize,
    },
    #[error("index {index} out of range for extent {extent} in {op}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        extent: usize,
    },
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
