//! Scene, camera and trajectory generation parameters.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgeConfig {
    /// Table-plane extent `[x_min, y_min]`..`[x_max, y_max]` in metres.
    pub workspace_min: [f64; 2],
    pub workspace_max: [f64; 2],
    pub box_side_min: f64,
    pub box_side_max: f64,
    pub box_height: f64,
    pub pusher_radius: f64,
    pub pusher_height: f64,
    /// Minimum gap between sampled footprints.
    pub clearance: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub n_views: usize,
    pub elevation_deg: f64,
    pub camera_distance: f64,
    pub focal_px: f64,
    /// Point the cameras look at.
    pub look_target: [f64; 3],
    /// Direction towards the light.
    pub light_dir: [f64; 3],
    pub ambient: f64,
    /// Pusher step length (m).
    pub step: f64,
    /// Standard deviation of the push direction noise (rad).
    pub direction_noise: f64,
    pub max_frames: usize,
    pub max_steps_per_target: usize,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        Self {
            workspace_min: [-0.2, -0.2],
            workspace_max: [0.2, 0.2],
            box_side_min: 0.04,
            box_side_max: 0.09,
            box_height: 0.05,
            pusher_radius: 0.02,
            pusher_height: 0.07,
            clearance: 0.005,
            image_width: 64,
            image_height: 48,
            n_views: 4,
            elevation_deg: 45.0,
            camera_distance: 0.75,
            focal_px: 60.0,
            look_target: [0.0, 0.0, 0.02],
            light_dir: [0.3, 0.2, 1.0],
            ambient: 0.3,
            step: 0.02,
            direction_noise: 0.2,
            max_frames: 30,
            max_steps_per_target: 15,
        }
    }
}
