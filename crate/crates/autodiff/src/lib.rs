//! Minimal dense-tensor autodiff for CPU training.
//!
//! Tensors are plain row-major buffers generic over [`Real`] (`f32` for
//! training, `f64` for gradient checks). A [`Tape`] records operations
//! define-by-run and replays them in reverse; parameters live in a
//! [`ParamStore`] and are updated by [`Adam`].

pub mod adam;
pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod params;
pub mod real;
pub mod sparse;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use error::{Result, TensorError};
pub use nn::{Init, Linear, Mlp};
pub use params::{Param, ParamId, ParamStore};
pub use real::Real;
pub use sparse::SparseRows;
pub use tape::{sigmoid, softplus, CustomOp, Gradients, Tape, Var};
pub use tensor::Tensor;
