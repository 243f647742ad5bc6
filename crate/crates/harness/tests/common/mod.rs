#![allow(dead_code)]

use cdyn_harness::HarnessConfig;
use cdyn_scene::{generate_dataset, CameraRig, Trajectory};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Networks, images and grids small enough that a training step takes
/// well under a millisecond.
pub const TINY: &str = "\
latent_dim = 4
feature_dim = 3
coord_width = 3
feature_hidden = 4
conv_channels = 2
phi_hidden = 5
phi_layers = 2
nerf_lift = 4
nerf_hidden = 5
nerf_layers = 2
edge_hidden = 5
edge_layers = 2
edge_dim = 3
node_hidden = 5
node_layers = 2
grid_dims = 2,4,4
image_width = 16
image_height = 12
focal_px = 15
n_views = 3
n_samples = 6
ray_budget = 24
eval_samples = 6
gnn_batch = 4
checkpoint_every = 7
horizon = 2
n_scenes = 4
max_frames = 18
";

pub fn tiny() -> HarnessConfig {
    HarnessConfig::parse(TINY).unwrap()
}

pub fn dataset(cfg: &HarnessConfig, scenes: usize, seed: u64) -> Vec<Trajectory> {
    let rig = CameraRig::ring(&cfg.forge).unwrap();
    generate_dataset(&mut ChaCha8Rng::seed_from_u64(seed), scenes, cfg.n_objects, &rig, &cfg.forge).unwrap()
}

pub fn bits(store: &cdyn_autodiff::ParamStore<f32>, ids: &[cdyn_autodiff::ParamId]) -> Vec<u32> {
    ids.iter()
        .flat_map(|&id| store.value(id).data().iter().map(|x| x.to_bits()))
        .collect()
}
