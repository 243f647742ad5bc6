//! Synthetic tabletop pushing scenes.
//!
//! Boxes and a red cylindrical pusher on a table, a ring of calibrated
//! cameras, a ray-cast renderer producing images and per-object masks, and a
//! quasi-static push oracle used to generate trajectory datasets.

pub mod collide;
pub mod config;
pub mod dataset;
pub mod error;
pub mod io;
pub mod push;
pub mod render;
pub mod scene;

pub use config::ForgeConfig;
pub use dataset::{generate_dataset, generate_trajectory, Frame, Trajectory};
pub use error::{Result, SceneError};
pub use io::{load_dataset, load_trajectory, save_dataset, save_trajectory};
pub use push::{max_penetration, step_push_oracle, PushOutcome};
pub use render::{render_ground_truth, CameraRig};
pub use scene::{sample_scene, Pose2, SceneObject, SceneState, Shape};
