#![allow(dead_code)]

use cdyn_core::{Aabb, Camera, Image, Intrinsics, Mask, ModelConfig, PosedView, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smallest architecture that still exercises every layer type.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        latent_dim: 4,
        feature_dim: 3,
        coord_width: 3,
        feature_hidden: 4,
        feature_layers: 2,
        conv_channels: 2,
        conv_strides: vec![1, 2, 2],
        phi_hidden: 5,
        phi_layers: 2,
        nerf_lift: 4,
        nerf_hidden: 5,
        nerf_layers: 2,
        fourier_octaves: 0,
        density_scale: 10.0,
        edge_hidden: 5,
        edge_layers: 2,
        edge_dim: 3,
        node_hidden: 5,
        node_layers: 2,
        grid_dims: [2, 4, 4],
        chunk_rows: 7,
        ..ModelConfig::default()
    }
}

pub fn boxes() -> Vec<Aabb> {
    vec![
        Aabb::new(Vec3::new(-0.14, -0.05, 0.0), Vec3::new(-0.04, 0.05, 0.05)),
        Aabb::new(Vec3::new(0.04, -0.05, 0.0), Vec3::new(0.12, 0.06, 0.05)),
    ]
}

pub fn ring_cameras(n: usize, width: usize, height: usize) -> Vec<Camera> {
    let target = Vec3::new(0.0, 0.0, 0.03);
    (0..n)
        .map(|i| {
            let az = std::f64::consts::FRAC_PI_4 + i as f64 * std::f64::consts::TAU / n as f64;
            let el = std::f64::consts::FRAC_PI_4;
            let r = 0.75;
            let eye = target + Vec3::new(r * el.cos() * az.cos(), r * el.cos() * az.sin(), r * el.sin());
            let f = width as f64 * 1.2;
            let intr = Intrinsics {
                fx: f,
                fy: f,
                cx: (width as f64 - 1.0) / 2.0,
                cy: (height as f64 - 1.0) / 2.0,
            };
            Camera::look_at(eye, target, Vec3::z(), intr, width, height).unwrap()
        })
        .collect()
}

/// Random-colour views of `objects` with ray-cast masks.
pub fn views_of(objects: &[Aabb], n_views: usize, width: usize, height: usize, seed: u64) -> Vec<PosedView> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ring_cameras(n_views, width, height)
        .into_iter()
        .map(|camera| {
            let data = (0..3 * width * height).map(|_| rng.gen::<f32>()).collect();
            let image = Image::from_planar(width, height, data);
            let masks = objects
                .iter()
                .map(|b| {
                    Mask::from_fn(width, height, |c, r| {
                        b.ray_bounds(&camera.ray(c as f64, r as f64)).is_some()
                    })
                })
                .collect();
            PosedView { image, camera, masks }
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
