//! Architecture, rendering and dynamics hyperparameters.

use crate::error::{CoreError, Result};
use crate::geometry::{Aabb, Vec3, WorkspaceGrid};

/// Network widths and the workspace discretization.
///
/// [`ModelConfig::default`] holds the full-size architecture;
/// [`ModelConfig::desk`] is a narrower variant that trains on one CPU core.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Latent size `k` per object.
    pub latent_dim: usize,
    /// Output size `n_o` of the feature encoder.
    pub feature_dim: usize,
    /// Output width of the single-layer camera-coordinate encoder.
    pub coord_width: usize,
    pub feature_hidden: usize,
    pub feature_layers: usize,
    pub conv_channels: usize,
    pub conv_strides: Vec<usize>,
    pub phi_hidden: usize,
    pub phi_layers: usize,
    pub nerf_lift: usize,
    pub nerf_hidden: usize,
    pub nerf_layers: usize,
    /// Number of sin/cos octaves appended to the NeRF input; 0 = plain lift.
    pub fourier_octaves: usize,
    /// Multiplier on the softplus density head (1/m).
    pub density_scale: f64,
    pub edge_hidden: usize,
    pub edge_layers: usize,
    /// Edge feature size `n_e`.
    pub edge_dim: usize,
    pub node_hidden: usize,
    pub node_layers: usize,
    pub workspace_min: [f64; 3],
    pub workspace_max: [f64; 3],
    /// Voxel counts along `[z, y, x]`.
    pub grid_dims: [usize; 3],
    /// Upper bound on feature-encoder rows evaluated per GEMM.
    pub chunk_rows: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            feature_dim: 64,
            coord_width: 32,
            feature_hidden: 128,
            feature_layers: 2,
            conv_channels: 128,
            conv_strides: vec![1, 2, 2],
            phi_hidden: 300,
            phi_layers: 3,
            nerf_lift: 64,
            nerf_hidden: 300,
            nerf_layers: 3,
            fourier_octaves: 0,
            density_scale: 10.0,
            edge_hidden: 256,
            edge_layers: 3,
            edge_dim: 256,
            node_hidden: 256,
            node_layers: 3,
            workspace_min: [-0.2, -0.2, 0.0],
            workspace_max: [0.2, 0.2, 0.1],
            grid_dims: [10, 40, 40],
            chunk_rows: 4096,
        }
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            latent_dim: 32,
            feature_dim: 16,
            coord_width: 16,
            feature_hidden: 32,
            conv_channels: 16,
            phi_hidden: 64,
            nerf_lift: 32,
            nerf_hidden: 64,
            edge_hidden: 64,
            edge_dim: 64,
            node_hidden: 64,
            grid_dims: [5, 20, 20],
            ..Self::default()
        }
    }

    pub fn workspace(&self) -> Aabb {
        Aabb::new(Vec3::from(self.workspace_min), Vec3::from(self.workspace_max))
    }

    pub fn grid(&self) -> Result<WorkspaceGrid> {
        WorkspaceGrid::new(self.workspace(), self.grid_dims)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("latent_dim", self.latent_dim),
            ("feature_dim", self.feature_dim),
            ("coord_width", self.coord_width),
            ("feature_hidden", self.feature_hidden),
            ("conv_channels", self.conv_channels),
            ("phi_hidden", self.phi_hidden),
            ("nerf_lift", self.nerf_lift),
            ("nerf_hidden", self.nerf_hidden),
            ("nerf_layers", self.nerf_layers),
            ("edge_hidden", self.edge_hidden),
            ("edge_layers", self.edge_layers),
            ("edge_dim", self.edge_dim),
            ("node_hidden", self.node_hidden),
            ("node_layers", self.node_layers),
            ("chunk_rows", self.chunk_rows),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(CoreError::Config(format!("{name} must be positive")));
            }
        }
        if self.conv_strides.is_empty() || self.conv_strides.contains(&0) {
            return Err(CoreError::Config("conv_strides must be non-empty and positive".into()));
        }
        if !(self.density_scale > 0.0) {
            return Err(CoreError::Config("density_scale must be positive".into()));
        }
        self.grid().map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderConfig {
    pub n_samples: usize,
    /// Enlargement of the union mask for training rays, in pixels.
    pub dilation_px: usize,
    /// Rays per training minibatch.
    pub ray_budget: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            n_samples: 64,
            dilation_px: 4,
            ray_budget: 1024,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AdjacencyMode {
    /// Re-estimated from the current latents at every message pass.
    InLoop,
    /// Estimated once per step from the intervened latents, with dilation.
    OncePerStep,
    /// Every object pair connected.
    Dense,
}

impl AdjacencyMode {
    pub fn name(self) -> &'static str {
        match self {
            AdjacencyMode::InLoop => "in_loop",
            AdjacencyMode::OncePerStep => "once_per_step",
            AdjacencyMode::Dense => "dense",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "in_loop" => Some(AdjacencyMode::InLoop),
            "once_per_step" => Some(AdjacencyMode::OncePerStep),
            "dense" => Some(AdjacencyMode::Dense),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsConfig {
    /// Message-passing depth `L`.
    pub passes: usize,
    pub adjacency_mode: AdjacencyMode,
    pub quasi_static: bool,
    /// Density threshold for occupancy.
    pub kappa: f64,
    /// Occupancy dilation half-width (voxels) for `OncePerStep`.
    pub dilation_voxels: usize,
    /// Occupancy dilation half-width (voxels) for `InLoop`.
    pub in_loop_dilation: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            passes: 3,
            adjacency_mode: AdjacencyMode::InLoop,
            quasi_static: true,
            kappa: 5.0,
            dilation_voxels: 2,
            in_loop_dilation: 0,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.passes == 0 {
            return Err(CoreError::Config("message passes L must be at least 1".into()));
        }
        if !(self.kappa >= 0.0) {
            return Err(CoreError::Config("kappa must be non-negative".into()));
        }
        Ok(())
    }

    /// Dilation used by the current adjacency mode.
    pub fn active_dilation(&self) -> usize {
        match self.adjacency_mode {
            AdjacencyMode::InLoop => self.in_loop_dilation,
            _ => self.dilation_voxels,
        }
    }
}
