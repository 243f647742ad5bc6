//! Quasi-static planar push oracle.
//!
//! The pusher is kinematic. Penetrated objects are projected out along the
//! minimal translation direction and turned about the contact point in
//! proportion to the lever arm of the push. This is projection dynamics,
//! not a friction model; it defines the ground truth of the synthetic task.

use crate::collide::{penetration, Contact, Footprint, Vec2};
use crate::config::ForgeConfig;
use crate::scene::{SceneObject, SceneState, Shape};

/// Sequential projection rounds per step.
pub const MAX_ROUNDS: usize = 10;
/// Yaw per unit of normalized lever-arm torque.
pub const ROTATION_GAIN: f64 = 0.5;
/// Largest rotation a single projection may apply (rad).
pub const MAX_TURN: f64 = 0.5;
const TOUCH: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct PushOutcome {
    pub state: SceneState,
    /// Objects that had to be held back at the workspace boundary.
    pub clamped: Vec<usize>,
}

/// Moves `object` by `shift`, turning it about `contact` by the yaw the
/// shift induces through the lever arm.
fn displace(object: &mut SceneObject, shift: Vec2, contact: Vec2) {
    let center = object.pose.position();
    let turn = match object.shape {
        Shape::Box { .. } => {
            let lever = contact - center;
            let rho2 = object.footprint().circumradius().powi(2);
            (ROTATION_GAIN * (lever.x * shift.y - lever.y * shift.x) / rho2).clamp(-MAX_TURN, MAX_TURN)
        }
        Shape::Cylinder { .. } => 0.0,
    };
    let (s, c) = turn.sin_cos();
    let r = center - contact;
    let rotated = contact + Vec2::new(c * r.x - s * r.y, s * r.x + c * r.y);
    let moved = rotated + shift;
    object.pose.x = moved.x;
    object.pose.y = moved.y;
    object.pose.yaw += turn;
}

/// Shift that brings `fp` back inside the workspace, or zero.
fn clamp_shift(fp: &Footprint, cfg: &ForgeConfig) -> Vec2 {
    let (lo, hi) = fp.bounds();
    let mut d = Vec2::zeros();
    for a in 0..2 {
        if lo[a] < cfg.workspace_min[a] {
            d[a] = cfg.workspace_min[a] - lo[a];
        } else if hi[a] > cfg.workspace_max[a] {
            d[a] = cfg.workspace_max[a] - hi[a];
        }
    }
    d
}

/// Advances the scene by one pusher displacement `motion` (m).
pub fn step_push_oracle(scene: &SceneState, motion: [f64; 2], cfg: &ForgeConfig) -> PushOutcome {
    let mut s = scene.clone();
    let p = s.pusher;
    s.objects[p].pose.x += motion[0];
    s.objects[p].pose.y += motion[1];
    let n = s.len();
    let mut moved = vec![false; n];
    moved[p] = true;
    for _ in 0..MAX_ROUNDS {
        let mut any = false;
        for i in 0..n {
            for j in i + 1..n {
                let Some(Contact { normal, depth, point }) =
                    penetration(&s.objects[i].footprint(), &s.objects[j].footprint())
                else {
                    continue;
                };
                if depth <= TOUCH {
                    continue;
                }
                any = true;
                // normal points from i towards j
                let (share_i, share_j) = match (i == p, j == p, moved[i], moved[j]) {
                    (true, _, _, _) => (0.0, 1.0),
                    (_, true, _, _) => (1.0, 0.0),
                    (_, _, true, false) => (0.0, 1.0),
                    (_, _, false, true) => (1.0, 0.0),
                    _ => (0.5, 0.5),
                };
                if share_i > 0.0 {
                    displace(&mut s.objects[i], -normal * (depth * share_i), point);
                    moved[i] = true;
                }
                if share_j > 0.0 {
                    displace(&mut s.objects[j], normal * (depth * share_j), point);
                    moved[j] = true;
                }
            }
        }
        if !any {
            break;
        }
    }
    let mut clamped = Vec::new();
    for (j, o) in s.objects.iter_mut().enumerate() {
        if j == p || !moved[j] {
            continue;
        }
        let d = clamp_shift(&o.footprint(), cfg);
        if d != Vec2::zeros() {
            o.pose.x += d.x;
            o.pose.y += d.y;
            clamped.push(j);
        }
    }
    PushOutcome { state: s, clamped }
}

/// Deepest pairwise footprint penetration in the scene.
pub fn max_penetration(scene: &SceneState) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in scene.objects.iter().enumerate() {
        for b in &scene.objects[i + 1..] {
            if let Some(c) = penetration(&a.footprint(), &b.footprint()) {
                worst = worst.max(c.depth);
            }
        }
    }
    worst
}
