//! Scene state and random scene sampling.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::collide::{penetration, Footprint, Vec2};
use crate::config::ForgeConfig;
use crate::error::{Result, SceneError};

/// Rejected samples allowed per placed object.
pub const MAX_REJECTIONS: usize = 1000;

pub const PUSHER_COLOR: [f64; 3] = [0.9, 0.1, 0.1];

/// Box colours, chosen to stay distinguishable from each other and from the
/// red pusher.
pub const PALETTE: [[f64; 3]; 9] = [
    [0.15, 0.3, 0.9],
    [0.95, 0.85, 0.1],
    [0.1, 0.75, 0.25],
    [0.85, 0.25, 0.85],
    [0.1, 0.8, 0.85],
    [1.0, 0.55, 0.1],
    [0.85, 0.85, 0.85],
    [0.5, 0.25, 0.95],
    [0.55, 0.35, 0.15],
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Box with `width` along its local x axis and `depth` along local y.
    Box { width: f64, depth: f64, height: f64 },
    Cylinder { radius: f64, height: f64 },
}

impl Shape {
    pub fn height(&self) -> f64 {
        match *self {
            Shape::Box { height, .. } | Shape::Cylinder { height, .. } => height,
        }
    }
}

/// Planar pose: position on the table and rotation about the vertical axis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub pose: Pose2,
    pub color: [f64; 3],
}

impl SceneObject {
    pub fn footprint(&self) -> Footprint {
        let center = self.pose.position();
        match self.shape {
            Shape::Box { width, depth, .. } => Footprint::Rect {
                center,
                half: Vec2::new(width / 2.0, depth / 2.0),
                yaw: self.pose.yaw,
            },
            Shape::Cylinder { radius, .. } => Footprint::Circle { center, radius },
        }
    }

    /// Centre of mass of the solid, assuming uniform density.
    pub fn center_of_mass(&self) -> [f64; 3] {
        [self.pose.x, self.pose.y, self.shape.height() / 2.0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub objects: Vec<SceneObject>,
    pub pusher: usize,
}

impl SceneState {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn poses(&self) -> Vec<Pose2> {
        self.objects.iter().map(|o| o.pose).collect()
    }

    pub fn with_poses(&self, poses: &[Pose2]) -> SceneState {
        let mut s = self.clone();
        for (o, p) in s.objects.iter_mut().zip(poses) {
            o.pose = *p;
        }
        s
    }

    pub fn colors(&self) -> Vec<[f64; 3]> {
        self.objects.iter().map(|o| o.color).collect()
    }
}

/// Whether a footprint lies entirely inside the table-plane workspace.
pub fn inside_workspace(fp: &Footprint, cfg: &ForgeConfig) -> bool {
    let (lo, hi) = fp.bounds();
    lo.x >= cfg.workspace_min[0]
        && lo.y >= cfg.workspace_min[1]
        && hi.x <= cfg.workspace_max[0]
        && hi.y <= cfg.workspace_max[1]
}

fn uniform_position<R: Rng + ?Sized>(rng: &mut R, cfg: &ForgeConfig) -> Pose2 {
    Pose2 {
        x: rng.gen_range(cfg.workspace_min[0]..cfg.workspace_max[0]),
        y: rng.gen_range(cfg.workspace_min[1]..cfg.workspace_max[1]),
        yaw: 0.0,
    }
}

fn place<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &ForgeConfig,
    placed: &[SceneObject],
    object: usize,
    requested: usize,
    mut propose: impl FnMut(&mut R) -> SceneObject,
) -> Result<SceneObject> {
    for _ in 0..=MAX_REJECTIONS {
        let o = propose(rng);
        let fp = o.footprint();
        let grown = fp.inflated(cfg.clearance);
        if inside_workspace(&fp, cfg) && placed.iter().all(|p| penetration(&p.footprint(), &grown).is_none()) {
            return Ok(o);
        }
    }
    Err(SceneError::Crowded {
        object,
        requested,
        attempts: MAX_REJECTIONS,
    })
}

/// Samples `n_objects` boxes with random size, position and yaw, then a
/// cylindrical pusher at a free position. The pusher is the last object.
pub fn sample_scene<R: Rng + ?Sized>(rng: &mut R, n_objects: usize, cfg: &ForgeConfig) -> Result<SceneState> {
    if n_objects == 0 {
        return Err(SceneError::NoObjects(n_objects));
    }
    let mut colors: Vec<[f64; 3]> = PALETTE.to_vec();
    colors.shuffle(rng);
    let mut objects: Vec<SceneObject> = Vec::with_capacity(n_objects + 1);
    for j in 0..n_objects {
        let color = colors[j % colors.len()];
        let o = place(rng, cfg, &objects, j, n_objects + 1, |r| SceneObject {
            shape: Shape::Box {
                width: r.gen_range(cfg.box_side_min..=cfg.box_side_max),
                depth: r.gen_range(cfg.box_side_min..=cfg.box_side_max),
                height: cfg.box_height,
            },
            pose: Pose2 {
                yaw: r.gen_range(0.0..std::f64::consts::PI),
                ..uniform_position(r, cfg)
            },
            color,
        })?;
        objects.push(o);
    }
    let pusher = place(rng, cfg, &objects, n_objects, n_objects + 1, |r| SceneObject {
        shape: Shape::Cylinder {
            radius: cfg.pusher_radius,
            height: cfg.pusher_height,
        },
        pose: uniform_position(r, cfg),
        color: PUSHER_COLOR,
    })?;
    objects.push(pusher);
    Ok(SceneState {
        objects,
        pusher: n_objects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampled_scenes_are_valid() {
        let cfg = ForgeConfig::default();
        for (seed, n) in [(1, 1), (2, 4), (3, 8)] {
            let s = sample_scene(&mut ChaCha8Rng::seed_from_u64(seed), n, &cfg).unwrap();
            assert_eq!(s.len(), n + 1);
            assert_eq!(s.pusher, n);
            assert!(matches!(s.objects[n].shape, Shape::Cylinder { .. }));
            for (i, a) in s.objects.iter().enumerate() {
                assert!(inside_workspace(&a.footprint(), &cfg));
                for b in &s.objects[i + 1..] {
                    assert!(penetration(&a.footprint(), &b.footprint()).is_none());
                }
            }
        }
    }

    #[test]
    fn crowded_workspace_is_an_error() {
        let cfg = ForgeConfig {
            workspace_min: [-0.06, -0.06],
            workspace_max: [0.06, 0.06],
            ..ForgeConfig::default()
        };
        let err = sample_scene(&mut ChaCha8Rng::seed_from_u64(0), 8, &cfg).unwrap_err();
        assert!(matches!(err, SceneError::Crowded { .. }));
        assert!(matches!(
            sample_scene(&mut ChaCha8Rng::seed_from_u64(0), 0, &cfg),
            Err(SceneError::NoObjects(0))
        ));
    }
}
