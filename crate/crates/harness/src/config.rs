//! Flat `key = value` run configuration.
//!
//! Every key has a default; a file only lists what it changes. `#` starts a
//! comment. The snapshot written into checkpoints lists every key, so a
//! checkpoint fully determines the model it was trained with.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use cdyn_core::{AdjacencyMode, DynamicsConfig, ModelConfig, RenderConfig};
use cdyn_scene::ForgeConfig;

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub ae_steps: usize,
    pub ae_lr: f64,
    pub gnn_steps: usize,
    pub gnn_lr: f64,
    pub gnn_batch: usize,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ae_steps: 20_000,
            ae_lr: 5e-4,
            gnn_steps: 10_000,
            gnn_lr: 1e-3,
            gnn_batch: 16,
            checkpoint_every: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub horizon: usize,
    pub n_samples: usize,
    /// Enlargement of the ground-truth union mask that defines the
    /// evaluated image region, in pixels.
    pub region_dilation: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            n_samples: 32,
            region_dilation: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarnessConfig {
    /// `desk` or `full`: the base network sizes before overrides.
    pub profile: String,
    pub model: ModelConfig,
    pub render: RenderConfig,
    pub dynamics: DynamicsConfig,
    pub forge: ForgeConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    /// Boxes per generated scene (the pusher comes on top).
    pub n_objects: usize,
    pub n_scenes: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            profile: "desk".into(),
            model: ModelConfig::desk(),
            render: RenderConfig::default(),
            dynamics: DynamicsConfig::default(),
            forge: ForgeConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            n_objects: 2,
            n_scenes: 200,
        }
    }
}

fn parse<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.parse().map_err(|e: T::Err| HarnessError::Config {
        line,
        detail: format!("{key}: cannot parse {v:?}: {e}"),
    })
}

fn parse_list<T: FromStr, const N: usize>(line: usize, key: &str, v: &str) -> Result<[T; N]>
where
    T::Err: Display,
{
    let items = v
        .split(',')
        .map(|s| parse(line, key, s.trim()))
        .collect::<Result<Vec<T>>>()?;
    items.try_into().map_err(|_| HarnessError::Config {
        line,
        detail: format!("{key}: expected {N} comma-separated values"),
    })
}

fn list<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl HarnessConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Self::parse(&text)
    }

    /// Defaults overridden by the `key = value` lines of `text`. A
    /// `profile` line resets the network sizes, so it should come first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| HarnessError::Config {
                line: i + 1,
                detail: format!("expected `key = value`, got {line:?}"),
            })?;
            cfg.set(i + 1, k.trim(), v.trim())?;
        }
        cfg.model.validate()?;
        cfg.dynamics.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        let m = &mut self.model;
        let f = &mut self.forge;
        match key {
            "profile" => {
                self.model = match v {
                    "desk" => ModelConfig::desk(),
                    "full" => ModelConfig::default(),
                    _ => {
                        return Err(HarnessError::Config {
                            line,
                            detail: format!("unknown profile {v:?} (desk or full)"),
                        })
                    }
                };
                self.profile = v.into();
            }
            "latent_dim" => m.latent_dim = parse(line, key, v)?,
            "feature_dim" => m.feature_dim = parse(line, key, v)?,
            "coord_width" => m.coord_width = parse(line, key, v)?,
            "feature_hidden" => m.feature_hidden = parse(line, key, v)?,
            "feature_layers" => m.feature_layers = parse(line, key, v)?,
            "conv_channels" => m.conv_channels = parse(line, key, v)?,
            "conv_strides" => {
                m.conv_strides = v
                    .split(',')
                    .map(|s| parse(line, key, s.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "phi_hidden" => m.phi_hidden = parse(line, key, v)?,
            "phi_layers" => m.phi_layers = parse(line, key, v)?,
            "nerf_lift" => m.nerf_lift = parse(line, key, v)?,
            "nerf_hidden" => m.nerf_hidden = parse(line, key, v)?,
            "nerf_layers" => m.nerf_layers = parse(line, key, v)?,
            "fourier_octaves" => m.fourier_octaves = parse(line, key, v)?,
            "density_scale" => m.density_scale = parse(line, key, v)?,
            "edge_hidden" => m.edge_hidden = parse(line, key, v)?,
            "edge_layers" => m.edge_layers = parse(line, key, v)?,
            "edge_dim" => m.edge_dim = parse(line, key, v)?,
            "node_hidden" => m.node_hidden = parse(line, key, v)?,
            "node_layers" => m.node_layers = parse(line, key, v)?,
            "workspace_min" => m.workspace_min = parse_list(line, key, v)?,
            "workspace_max" => m.workspace_max = parse_list(line, key, v)?,
            "grid_dims" => m.grid_dims = parse_list(line, key, v)?,
            "chunk_rows" => m.chunk_rows = parse(line, key, v)?,
            "n_samples" => self.render.n_samples = parse(line, key, v)?,
            "dilation_px" => self.render.dilation_px = parse(line, key, v)?,
            "ray_budget" => self.render.ray_budget = parse(line, key, v)?,
            "passes" => self.dynamics.passes = parse(line, key, v)?,
            "adjacency" => {
                self.dynamics.adjacency_mode = AdjacencyMode::parse(v).ok_or_else(|| HarnessError::Config {
                    line,
                    detail: format!("unknown adjacency mode {v:?}"),
                })?
            }
            "quasi_static" => self.dynamics.quasi_static = parse(line, key, v)?,
            "kappa" => self.dynamics.kappa = parse(line, key, v)?,
            "dilation_voxels" => self.dynamics.dilation_voxels = parse(line, key, v)?,
            "in_loop_dilation" => self.dynamics.in_loop_dilation = parse(line, key, v)?,
            "image_width" => f.image_width = parse(line, key, v)?,
            "image_height" => f.image_height = parse(line, key, v)?,
            "n_views" => f.n_views = parse(line, key, v)?,
            "focal_px" => f.focal_px = parse(line, key, v)?,
            "camera_distance" => f.camera_distance = parse(line, key, v)?,
            "elevation_deg" => f.elevation_deg = parse(line, key, v)?,
            "step" => f.step = parse(line, key, v)?,
            "direction_noise" => f.direction_noise = parse(line, key, v)?,
            "max_frames" => f.max_frames = parse(line, key, v)?,
            "pusher_radius" => f.pusher_radius = parse(line, key, v)?,
            "ae_steps" => self.train.ae_steps = parse(line, key, v)?,
            "ae_lr" => self.train.ae_lr = parse(line, key, v)?,
            "gnn_steps" => self.train.gnn_steps = parse(line, key, v)?,
            "gnn_lr" => self.train.gnn_lr = parse(line, key, v)?,
            "gnn_batch" => self.train.gnn_batch = parse(line, key, v)?,
            "checkpoint_every" => self.train.checkpoint_every = parse(line, key, v)?,
            "horizon" => self.eval.horizon = parse(line, key, v)?,
            "eval_samples" => self.eval.n_samples = parse(line, key, v)?,
            "eval_dilation" => self.eval.region_dilation = parse(line, key, v)?,
            "n_objects" => self.n_objects = parse(line, key, v)?,
            "n_scenes" => self.n_scenes = parse(line, key, v)?,
            _ => {
                return Err(HarnessError::Config {
                    line,
                    detail: format!("unknown key {key:?}"),
                })
            }
        }
        Ok(())
    }

    /// Every key with its current value, in a form [`Self::parse`] reads
    /// back to an identical config.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let f = &self.forge;
        let d = &self.dynamics;
        let t = &self.train;
        let rows: Vec<(&str, String)> = vec![
            ("profile", self.profile.clone()),
            ("latent_dim", m.latent_dim.to_string()),
            ("feature_dim", m.feature_dim.to_string()),
            ("coord_width", m.coord_width.to_string()),
            ("feature_hidden", m.feature_hidden.to_string()),
            ("feature_layers", m.feature_layers.to_string()),
            ("conv_channels", m.conv_channels.to_string()),
            ("conv_strides", list(&m.conv_strides)),
            ("phi_hidden", m.phi_hidden.to_string()),
            ("phi_layers", m.phi_layers.to_string()),
            ("nerf_lift", m.nerf_lift.to_string()),
            ("nerf_hidden", m.nerf_hidden.to_string()),
            ("nerf_layers", m.nerf_layers.to_string()),
            ("fourier_octaves", m.fourier_octaves.to_string()),
            ("density_scale", m.density_scale.to_string()),
            ("edge_hidden", m.edge_hidden.to_string()),
            ("edge_layers", m.edge_layers.to_string()),
            ("edge_dim", m.edge_dim.to_string()),
            ("node_hidden", m.node_hidden.to_string()),
            ("node_layers", m.node_layers.to_string()),
            ("workspace_min", list(&m.workspace_min)),
            ("workspace_max", list(&m.workspace_max)),
            ("grid_dims", list(&m.grid_dims)),
            ("chunk_rows", m.chunk_rows.to_string()),
            ("n_samples", self.render.n_samples.to_string()),
            ("dilation_px", self.render.dilation_px.to_string()),
            ("ray_budget", self.render.ray_budget.to_string()),
            ("passes", d.passes.to_string()),
            ("adjacency", d.adjacency_mode.name().to_string()),
            ("quasi_static", d.quasi_static.to_string()),
            ("kappa", d.kappa.to_string()),
            ("dilation_voxels", d.dilation_voxels.to_string()),
            ("in_loop_dilation", d.in_loop_dilation.to_string()),
            ("image_width", f.image_width.to_string()),
            ("image_height", f.image_height.to_string()),
            ("n_views", f.n_views.to_string()),
            ("focal_px", f.focal_px.to_string()),
            ("camera_distance", f.camera_distance.to_string()),
            ("elevation_deg", f.elevation_deg.to_string()),
            ("step", f.step.to_string()),
            ("direction_noise", f.direction_noise.to_string()),
            ("max_frames", f.max_frames.to_string()),
            ("pusher_radius", f.pusher_radius.to_string()),
            ("ae_steps", t.ae_steps.to_string()),
            ("ae_lr", t.ae_lr.to_string()),
            ("gnn_steps", t.gnn_steps.to_string()),
            ("gnn_lr", t.gnn_lr.to_string()),
            ("gnn_batch", t.gnn_batch.to_string()),
            ("checkpoint_every", t.checkpoint_every.to_string()),
            ("horizon", self.eval.horizon.to_string()),
            ("eval_samples", self.eval.n_samples.to_string()),
            ("eval_dilation", self.eval.region_dilation.to_string()),
            ("n_objects", self.n_objects.to_string()),
            ("n_scenes", self.n_scenes.to_string()),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = HarnessConfig::parse("profile = full\nae_lr = 0.000123\nadjacency = dense # ablation\n").unwrap();
        assert_eq!(cfg.model.latent_dim, 64);
        assert_eq!(cfg.dynamics.adjacency_mode, AdjacencyMode::Dense);
        cfg.forge.focal_px = 61.25;
        cfg.model.workspace_min = [-0.3, -0.1, 0.0];
        assert_eq!(HarnessConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(HarnessConfig::parse("").unwrap(), HarnessConfig::default());
    }

    #[test]
    fn bad_lines_name_their_line() {
        let err = HarnessConfig::parse("ae_lr = 1e-3\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, HarnessError::Config { line: 2, .. }), "{err}");
        assert!(HarnessConfig::parse("grid_dims = 1,2\n").is_err());
        assert!(HarnessConfig::parse("latent_dim: 3\n").is_err());
        assert!(HarnessConfig::parse("passes = 0\n").is_err());
    }
}
