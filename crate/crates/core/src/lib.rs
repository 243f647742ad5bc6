//! Object-centric scene model: per-object encoder, conditional radiance
//! field decoder, volumetric rendering and latent graph dynamics.

pub mod config;
pub mod decoder;
pub mod dynamics;
pub mod encoder;
pub mod error;
pub mod geometry;
pub mod image;
pub mod latent;
pub mod model;
pub mod render;

pub use config::{AdjacencyMode, DynamicsConfig, ModelConfig, RenderConfig};
pub use decoder::{collision_adjacency, Adjacency, Decoder, ObjectGeometry, Occupancy};
pub use dynamics::{Dynamics, GnnSample, GnnTrainConfig, Predictor};
pub use encoder::Encoder;
pub use error::{CoreError, Result};
pub use geometry::{Aabb, CamCoord, Camera, Intrinsics, Ray, RigidTransform, Vec3, WorkspaceGrid};
pub use image::{Image, Mask, PosedView};
pub use latent::LatentSet;
pub use model::Model;
