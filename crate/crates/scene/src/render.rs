//! Camera rig and ray-cast ground-truth rendering.

use cdyn_core::{Camera, Image, Intrinsics, Mask, PosedView, Ray, Vec3};
use serde::{Deserialize, Serialize};

use crate::config::ForgeConfig;
use crate::error::Result;
use crate::scene::{SceneObject, SceneState, Shape};

/// Calibrated cameras shared by every frame of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraRig {
    pub cameras: Vec<Camera>,
    pub width: usize,
    pub height: usize,
}

/// Serialized form of a rig: row-major 3x4 projection matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigFile {
    pub width: usize,
    pub height: usize,
    pub matrices: Vec<[[f64; 4]; 3]>,
}

impl CameraRig {
    /// Views evenly spaced in azimuth (starting at 45 degrees) at a fixed
    /// elevation, all looking at `cfg.look_target`.
    pub fn ring(cfg: &ForgeConfig) -> Result<Self> {
        let target = Vec3::from(cfg.look_target);
        let el = cfg.elevation_deg.to_radians();
        let intr = Intrinsics {
            fx: cfg.focal_px,
            fy: cfg.focal_px,
            cx: (cfg.image_width as f64 - 1.0) / 2.0,
            cy: (cfg.image_height as f64 - 1.0) / 2.0,
        };
        let cameras = (0..cfg.n_views)
            .map(|i| {
                let az = std::f64::consts::FRAC_PI_4 + std::f64::consts::TAU * i as f64 / cfg.n_views as f64;
                let dir = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
                Camera::look_at(
                    target + dir * cfg.camera_distance,
                    target,
                    Vec3::z(),
                    intr,
                    cfg.image_width,
                    cfg.image_height,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            cameras,
            width: cfg.image_width,
            height: cfg.image_height,
        })
    }

    pub fn to_file(&self) -> RigFile {
        RigFile {
            width: self.width,
            height: self.height,
            matrices: self
                .cameras
                .iter()
                .map(|c| {
                    let p = c.matrix();
                    std::array::from_fn(|r| std::array::from_fn(|k| p[(r, k)]))
                })
                .collect(),
        }
    }

    pub fn from_file(f: &RigFile) -> Result<Self> {
        let cameras = f
            .matrices
            .iter()
            .map(|m| {
                let p = nalgebra::Matrix3x4::from_fn(|r, k| m[r][k]);
                Camera::from_matrix(p, f.width, f.height)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            cameras,
            width: f.width,
            height: f.height,
        })
    }
}

/// Nearest intersection of `ray` with the solid, as `(distance, normal)`.
pub fn intersect(object: &SceneObject, ray: &Ray) -> Option<(f64, Vec3)> {
    let (s, c) = object.pose.yaw.sin_cos();
    let d = ray.origin - Vec3::new(object.pose.x, object.pose.y, 0.0);
    // into the object frame
    let o = Vec3::new(c * d.x + s * d.y, -s * d.x + c * d.y, d.z);
    let v = Vec3::new(c * ray.dir.x + s * ray.dir.y, -s * ray.dir.x + c * ray.dir.y, ray.dir.z);
    let (t, n) = match object.shape {
        Shape::Box { width, depth, height } => {
            hit_box(&o, &v, [width / 2.0, depth / 2.0], height)?
        }
        Shape::Cylinder { radius, height } => hit_cylinder(&o, &v, radius, height)?,
    };
    let world_n = Vec3::new(c * n.x - s * n.y, s * n.x + c * n.y, n.z);
    Some((t, world_n))
}

fn hit_box(o: &Vec3, v: &Vec3, half: [f64; 2], height: f64) -> Option<(f64, Vec3)> {
    let lo = [-half[0], -half[1], 0.0];
    let hi = [half[0], half[1], height];
    let mut near = f64::NEG_INFINITY;
    let mut far = f64::INFINITY;
    let mut normal = Vec3::zeros();
    for a in 0..3 {
        if v[a].abs() < 1e-15 {
            if o[a] < lo[a] || o[a] > hi[a] {
                return None;
            }
            continue;
        }
        let t0 = (lo[a] - o[a]) / v[a];
        let t1 = (hi[a] - o[a]) / v[a];
        let (ta, tb, sign) = if t0 < t1 { (t0, t1, -1.0) } else { (t1, t0, 1.0) };
        if ta > near {
            near = ta;
            normal = Vec3::zeros();
            normal[a] = sign;
        }
        far = far.min(tb);
    }
    (near <= far && near > 0.0).then_some((near, normal))
}

fn hit_cylinder(o: &Vec3, v: &Vec3, r: f64, height: f64) -> Option<(f64, Vec3)> {
    let mut best: Option<(f64, Vec3)> = None;
    let mut consider = |t: f64, n: Vec3| {
        if t > 0.0 && best.map_or(true, |(b, _)| t < b) {
            best = Some((t, n));
        }
    };
    let a = v.x * v.x + v.y * v.y;
    if a > 1e-15 {
        let b = 2.0 * (o.x * v.x + o.y * v.y);
        let c = o.x * o.x + o.y * o.y - r * r;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let t = (-b - disc.sqrt()) / (2.0 * a);
            let p = o + v * t;
            if (0.0..=height).contains(&p.z) {
                consider(t, Vec3::new(p.x / r, p.y / r, 0.0));
            }
        }
    }
    if v.z.abs() > 1e-15 {
        for (z, nz) in [(height, 1.0), (0.0, -1.0)] {
            let t = (z - o.z) / v.z;
            let p = o + v * t;
            if p.x * p.x + p.y * p.y <= r * r {
                consider(t, Vec3::new(0.0, 0.0, nz));
            }
        }
    }
    best
}

/// First object hit by `ray`, with the hit distance and surface normal.
pub fn first_hit(scene: &SceneState, ray: &Ray) -> Option<(usize, f64, Vec3)> {
    let mut best: Option<(usize, f64, Vec3)> = None;
    for (j, o) in scene.objects.iter().enumerate() {
        if let Some((t, n)) = intersect(o, ray) {
            if best.map_or(true, |(_, b, _)| t < b) {
                best = Some((j, t, n));
            }
        }
    }
    best
}

/// Renders every view of the rig: flat-shaded colours under a directional
/// light and a first-hit mask per object. Background pixels are black.
/// Images are quantized to 8 bits so they survive a PNG round trip exactly.
pub fn render_ground_truth(scene: &SceneState, rig: &CameraRig, cfg: &ForgeConfig) -> Vec<PosedView> {
    let light = Vec3::from(cfg.light_dir).normalize();
    rig.cameras
        .iter()
        .map(|cam| {
            let (w, h) = (cam.width, cam.height);
            let mut image = Image::black(w, h);
            let mut masks = vec![Mask::empty(w, h); scene.len()];
            for row in 0..h {
                for col in 0..w {
                    let ray = cam.ray(col as f64, row as f64);
                    if let Some((j, _, n)) = first_hit(scene, &ray) {
                        let shade = cfg.ambient + (1.0 - cfg.ambient) * n.dot(&light).max(0.0);
                        let c = scene.objects[j].color;
                        image.set_pixel(col, row, c.map(|v| (v * shade) as f32));
                        masks[j].set(col, row, true);
                    }
                }
            }
            PosedView {
                image: Image::from_rgb8(w, h, &image.to_rgb8()),
                camera: cam.clone(),
                masks,
            }
        })
        .collect()
}
