//! Pushing trajectories rendered from random scenes.

use cdyn_core::{Image, Mask, PosedView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::collide::Footprint;
use crate::config::ForgeConfig;
use crate::error::Result;
use crate::push::step_push_oracle;
use crate::render::{render_ground_truth, CameraRig};
use crate::scene::{inside_workspace, sample_scene, Pose2, SceneState};

/// Observations at one time step: an image and a mask per object for every
/// camera.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub images: Vec<Image>,
    /// `masks[i][j]` is object `j` in view `i`.
    pub masks: Vec<Vec<Mask>>,
}

impl Frame {
    pub fn from_views(views: Vec<PosedView>) -> Self {
        let (images, masks) = views.into_iter().map(|v| (v.image, v.masks)).unzip();
        Self { images, masks }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub rig: CameraRig,
    pub frames: Vec<Frame>,
    /// Index of the pusher.
    pub articulated: usize,
    /// Shapes, colours and poses of the first frame.
    pub initial: SceneState,
    /// Ground-truth poses per frame.
    pub poses: Vec<Vec<Pose2>>,
    /// Pusher displacement between consecutive frames.
    pub displacements: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn object_count(&self) -> usize {
        self.initial.len()
    }

    /// Posed views of frame `t`.
    pub fn views(&self, t: usize) -> Vec<PosedView> {
        let f = &self.frames[t];
        self.rig
            .cameras
            .iter()
            .zip(f.images.iter().zip(&f.masks))
            .map(|(camera, (image, masks))| PosedView {
                image: image.clone(),
                camera: camera.clone(),
                masks: masks.clone(),
            })
            .collect()
    }

    /// Ground-truth scene at frame `t`.
    pub fn state(&self, t: usize) -> SceneState {
        self.initial.with_poses(&self.poses[t])
    }
}

/// Rolls out one scene: pick a random box, walk the pusher towards its
/// centre along noisy directions, and pick another box whenever the pusher
/// would leave the workspace or has spent its step budget. The scene ends
/// when an object hits the workspace boundary or `max_frames` is reached.
pub fn generate_trajectory<R: Rng + ?Sized>(
    rng: &mut R,
    n_objects: usize,
    rig: &CameraRig,
    cfg: &ForgeConfig,
) -> Result<Trajectory> {
    let mut state = sample_scene(rng, n_objects, cfg)?;
    let noise = Normal::new(0.0, cfg.direction_noise.max(0.0)).expect("finite noise scale");
    let initial = state.clone();
    let mut frames = vec![Frame::from_views(render_ground_truth(&state, rig, cfg))];
    let mut poses = vec![state.poses()];
    let mut displacements = Vec::new();
    let p = state.pusher;
    let mut stalled = 0;
    'scene: while frames.len() < cfg.max_frames && stalled < 4 * n_objects.max(1) {
        let target = rng.gen_range(0..n_objects);
        let mut advanced = false;
        for _ in 0..cfg.max_steps_per_target {
            let to = state.objects[target].pose.position() - state.objects[p].pose.position();
            let heading = to.y.atan2(to.x) + noise.sample(rng);
            let motion = [cfg.step * heading.cos(), cfg.step * heading.sin()];
            let next = Footprint::Circle {
                center: state.objects[p].pose.position() + nalgebra::Vector2::from(motion),
                radius: cfg.pusher_radius,
            };
            if !inside_workspace(&next, cfg) {
                break;
            }
            let out = step_push_oracle(&state, motion, cfg);
            if !out.clamped.is_empty() {
                break 'scene;
            }
            state = out.state;
            frames.push(Frame::from_views(render_ground_truth(&state, rig, cfg)));
            poses.push(state.poses());
            displacements.push(motion);
            advanced = true;
            if frames.len() >= cfg.max_frames {
                break 'scene;
            }
        }
        stalled = if advanced { 0 } else { stalled + 1 };
    }
    Ok(Trajectory {
        rig: rig.clone(),
        frames,
        articulated: p,
        initial,
        poses,
        displacements,
    })
}

/// Generates `n_scenes` trajectories. Each scene draws from its own ChaCha8
/// stream seeded from `rng`, so a scene depends only on its seed.
pub fn generate_dataset<R: Rng + ?Sized>(
    rng: &mut R,
    n_scenes: usize,
    n_objects: usize,
    rig: &CameraRig,
    cfg: &ForgeConfig,
) -> Result<Vec<Trajectory>> {
    let seeds: Vec<u64> = (0..n_scenes).map(|_| rng.gen()).collect();
    seeds
        .into_iter()
        .map(|s| generate_trajectory(&mut ChaCha8Rng::seed_from_u64(s), n_objects, rig, cfg))
        .collect()
}
