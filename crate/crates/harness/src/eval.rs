//! Multi-step prediction error curves.

use std::fmt::Write as _;
use std::path::Path;

use cdyn_core::decoder::ObjectGeometry;
use cdyn_core::render::{masked_mse, render_image};
use cdyn_core::{DynamicsConfig, Image, LatentSet, Mask, Model, RigidTransform};
use cdyn_scene::Trajectory;

use crate::config::EvalConfig;
use crate::error::{HarnessError, Result};

/// One rollout configuration to evaluate. Modes may carry different
/// dynamics weights, e.g. a GNN trained for dense adjacency.
pub struct EvalMode<'a> {
    pub name: String,
    pub model: &'a Model<f32>,
    pub dynamics: DynamicsConfig,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepStats {
    pub mean: f64,
    pub stderr: f64,
    pub median: f64,
}

impl StepStats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Self { mean, stderr, median }
    }
}

/// Per-step error curves of one mode. The per-scene vectors are indexed
/// `[step][scene]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mode: String,
    pub dynamics: String,
    pub commit: String,
    pub scenes: usize,
    pub skipped: usize,
    /// Masked-image MSE against the ground-truth images.
    pub image_mse: Vec<Vec<f64>>,
    /// Masked-image MSE against renders of the per-step re-encoded latents.
    pub relative: Vec<Vec<f64>>,
    /// Mean planar centre-of-mass error of the passive objects (m).
    pub com_error: Vec<Vec<f64>>,
}

impl EvalReport {
    pub fn horizon(&self) -> usize {
        self.image_mse.len().saturating_sub(1)
    }

    pub fn stats(metric: &[Vec<f64>]) -> Vec<StepStats> {
        metric.iter().map(|v| StepStats::of(v)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,metric,mean,stderr\n");
        for (name, metric) in [
            ("image_mse", &self.image_mse),
            ("relative_mse", &self.relative),
            ("com_error", &self.com_error),
        ] {
            for (t, s) in Self::stats(metric).iter().enumerate() {
                writeln!(out, "{t},{name},{},{}", s.mean, s.stderr).unwrap();
            }
        }
        out
    }
}

/// `git rev-parse --short HEAD` of the working directory, or `unknown`.
pub fn commit_id() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

fn dynamics_label(d: &DynamicsConfig) -> String {
    format!(
        "adjacency={} quasi_static={} passes={} kappa={}",
        d.adjacency_mode.name(),
        d.quasi_static,
        d.passes,
        d.kappa
    )
}

fn ae_fingerprint(model: &Model<f32>) -> Vec<u32> {
    model
        .ae_params()
        .iter()
        .flat_map(|&id| model.store.value(id).data().iter().map(|x| x.to_bits()))
        .collect()
}

struct Frame {
    region: Vec<Mask>,
    pixels: Vec<Vec<usize>>,
    target: Vec<Image>,
}

struct Evaluator<'a> {
    model: &'a Model<f32>,
    traj: &'a Trajectory,
    cfg: &'a EvalConfig,
}

impl Evaluator<'_> {
    fn frame(&self, t: usize) -> Frame {
        let f = &self.traj.frames[t];
        let mut out = Frame {
            region: Vec::new(),
            pixels: Vec::new(),
            target: Vec::new(),
        };
        for (i, img) in f.images.iter().enumerate() {
            let total = Mask::union(&f.masks[i], img.width, img.height);
            let region = total.dilate(self.cfg.region_dilation);
            out.pixels.push(region.pixels());
            out.region.push(region);
            out.target.push(img.masked(&total));
        }
        out
    }

    fn render(&self, z: &LatentSet<f32>, frame: &Frame) -> Result<Vec<Image>> {
        let m = self.model;
        let rig = &self.traj.rig;
        rig.cameras
            .iter()
            .zip(&frame.region)
            .map(|(cam, region)| {
                Ok(render_image(
                    &m.store,
                    &m.decoder,
                    z,
                    cam,
                    &m.grid.bounds,
                    self.cfg.n_samples,
                    Some(region),
                )?)
            })
            .collect()
    }

    fn image_error(frame: &Frame, rendered: &[Image], against: &[Image]) -> f64 {
        let n = rendered.len() as f64;
        rendered
            .iter()
            .zip(against)
            .zip(&frame.pixels)
            .map(|((r, a), px)| masked_mse(r, a, px))
            .sum::<f64>()
            / n
    }

    fn com_error(&self, z: &LatentSet<f32>, t: usize, kappa: f64) -> Result<f64> {
        let m = self.model;
        let g = ObjectGeometry::decode(&m.decoder, &m.store, &m.grid, z, kappa)?;
        let b = m.grid.bounds;
        let fallback = [(b.min.x + b.max.x) / 2.0, (b.min.y + b.max.y) / 2.0];
        let state = self.traj.state(t);
        let mut acc = 0.0;
        let mut n = 0;
        for (j, obj) in state.objects.iter().enumerate() {
            if j == self.traj.articulated {
                continue;
            }
            let truth = obj.center_of_mass();
            let p = g.com[j].map_or(fallback, |c| [c.x, c.y]);
            acc += ((p[0] - truth[0]).powi(2) + (p[1] - truth[1]).powi(2)).sqrt();
            n += 1;
        }
        Ok(if n == 0 { 0.0 } else { acc / n as f64 })
    }
}

/// Encodes frame 0 of every trajectory with at least `horizon + 1` frames,
/// rolls it forward under the recorded pusher motion with each mode, and
/// scores every predicted step in all views. Step 0 is the plain
/// reconstruction of frame 0, so it is identical for modes that share an
/// auto-encoder.
pub fn evaluate_rollouts(dataset: &[Trajectory], modes: &[EvalMode], cfg: &EvalConfig) -> Result<Vec<EvalReport>> {
    if modes.is_empty() {
        return Err(HarnessError::format("eval request", "no modes"));
    }
    let horizon = cfg.horizon;
    let commit = commit_id();
    let usable: Vec<&Trajectory> = dataset.iter().filter(|t| t.len() > horizon).collect();
    let skipped = dataset.len() - usable.len();
    if skipped > 0 {
        log::info!("skipping {skipped} trajectories shorter than {} frames", horizon + 1);
    }
    let mut reports: Vec<EvalReport> = modes
        .iter()
        .map(|m| EvalReport {
            mode: m.name.clone(),
            dynamics: dynamics_label(&m.dynamics),
            commit: commit.clone(),
            scenes: usable.len(),
            skipped,
            image_mse: vec![Vec::new(); horizon + 1],
            relative: vec![Vec::new(); horizon + 1],
            com_error: vec![Vec::new(); horizon + 1],
        })
        .collect();
    let prints: Vec<Vec<u32>> = modes.iter().map(|m| ae_fingerprint(m.model)).collect();
    for traj in usable {
        let frames: Vec<Frame> = {
            let e = Evaluator { model: modes[0].model, traj, cfg };
            (0..=horizon).map(|t| e.frame(t)).collect()
        };
        let actions: Vec<RigidTransform> = traj.displacements[..horizon]
            .iter()
            .map(|d| RigidTransform::planar(d[0], d[1], 0.0))
            .collect();
        let views0 = traj.views(0);
        // reconstructions depend only on the auto-encoder, so modes sharing
        // one reuse them
        let mut recon_cache: Vec<(usize, Vec<LatentSet<f32>>, Vec<Vec<Image>>)> = Vec::new();
        for (k, mode) in modes.iter().enumerate() {
            let e = Evaluator { model: mode.model, traj, cfg };
            let owner = (0..k).find(|&o| prints[o] == prints[k]).unwrap_or(k);
            if !recon_cache.iter().any(|(o, _, _)| *o == owner) {
                let mut zs = Vec::new();
                let mut imgs = Vec::new();
                for (t, frame) in frames.iter().enumerate() {
                    let z = mode.model.encoder.encode_scene(&mode.model.store, &traj.views(t), &mode.model.grid)?;
                    imgs.push(e.render(&z, frame)?);
                    zs.push(z);
                }
                recon_cache.push((owner, zs, imgs));
            }
            let (_, recon_z, recon_img) = recon_cache.iter().find(|(o, _, _)| *o == owner).unwrap();
            let predictor = mode.model.predictor(&mode.dynamics);
            let rollout = predictor.rollout_from(recon_z[0].clone(), &views0, &actions, traj.articulated)?;
            let rep = &mut reports[k];
            for (t, z) in rollout.iter().enumerate() {
                let rendered = if t == 0 {
                    recon_img[0].clone()
                } else {
                    e.render(z, &frames[t])?
                };
                rep.image_mse[t].push(Evaluator::image_error(&frames[t], &rendered, &frames[t].target));
                rep.relative[t].push(Evaluator::image_error(&frames[t], &rendered, &recon_img[t]));
                rep.com_error[t].push(e.com_error(z, t, mode.dynamics.kappa)?);
            }
        }
    }
    Ok(reports)
}

const PLOT_COLORS: [[u8; 3]; 6] = [
    [220, 50, 47],
    [38, 139, 210],
    [133, 153, 0],
    [211, 54, 130],
    [181, 137, 0],
    [42, 161, 152],
];

fn line(img: &mut image::RgbImage, a: (i64, i64), b: (i64, i64), c: [u8; 3]) {
    let (mut x, mut y) = a;
    let (dx, dy) = ((b.0 - a.0).abs(), -(b.1 - a.1).abs());
    let (sx, sy) = (if a.0 < b.0 { 1 } else { -1 }, if a.1 < b.1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, image::Rgb(c));
        }
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Mean-per-step curves of one metric for every report, one colour per
/// mode in report order, on a white canvas with plain axes. The y axis
/// runs from 0 to the largest mean.
pub fn plot_curves(reports: &[EvalReport], metric: impl Fn(&EvalReport) -> &Vec<Vec<f64>>, path: &Path) -> Result<()> {
    let (w, h, pad) = (480u32, 320u32, 30i64);
    let mut img = image::RgbImage::from_pixel(w, h, image::Rgb([255, 255, 255]));
    let (x0, y0, x1, y1) = (pad, h as i64 - pad, w as i64 - pad / 2, pad / 2);
    line(&mut img, (x0, y0), (x1, y0), [0, 0, 0]);
    line(&mut img, (x0, y0), (x0, y1), [0, 0, 0]);
    let curves: Vec<Vec<f64>> = reports
        .iter()
        .map(|r| EvalReport::stats(metric(r)).iter().map(|s| s.mean).collect())
        .collect();
    let ymax = curves.iter().flatten().cloned().fold(0.0, f64::max).max(1e-12);
    let steps = curves.iter().map(|c| c.len()).max().unwrap_or(0).max(2) - 1;
    for t in 0..=steps {
        let x = x0 + (x1 - x0) * t as i64 / steps as i64;
        line(&mut img, (x, y0), (x, y0 + 3), [0, 0, 0]);
    }
    for (k, c) in curves.iter().enumerate() {
        let color = PLOT_COLORS[k % PLOT_COLORS.len()];
        let pts: Vec<(i64, i64)> = c
            .iter()
            .enumerate()
            .map(|(t, v)| {
                let x = x0 + (x1 - x0) * t as i64 / steps as i64;
                let y = y0 - ((y0 - y1) as f64 * v / ymax).round() as i64;
                (x, y)
            })
            .collect();
        for pair in pts.windows(2) {
            line(&mut img, pair[0], pair[1], color);
        }
    }
    img.save(path).map_err(|e| HarnessError::format("plot", format!("{}: {e}", path.display())))
}

/// Writes `<mode>.csv` per report plus `image_mse.png`, `relative_mse.png`
/// and `com_error.png` into `dir`.
pub fn write_reports(reports: &[EvalReport], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    for r in reports {
        let p = dir.join(format!("{}.csv", r.mode));
        std::fs::write(&p, r.to_csv()).map_err(HarnessError::io(&p))?;
    }
    plot_curves(reports, |r| &r.image_mse, &dir.join("image_mse.png"))?;
    plot_curves(reports, |r| &r.relative, &dir.join("relative_mse.png"))?;
    plot_curves(reports, |r| &r.com_error, &dir.join("com_error.png"))
}
