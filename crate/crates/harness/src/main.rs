use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use cdyn_core::render::render_image;
use cdyn_core::{AdjacencyMode, LatentSet, Mask, Model, RigidTransform};
use cdyn_harness::eval::{evaluate_rollouts, write_reports, EvalMode};
use cdyn_harness::oracle::{one_object_task, OracleWorld};
use cdyn_harness::train::{load_model, train_autoencoder, train_dynamics};
use cdyn_harness::{Checkpoint, EvalReport, HarnessConfig, StepStats};
use cdyn_planner::{rrt_plan, GoalSpec, LearnedWorld, RrtConfig, Selection};
use cdyn_scene::io::save_image;
use cdyn_scene::{generate_dataset, load_dataset, render_ground_truth, save_dataset, CameraRig, Trajectory};
use clap::{Parser, Subcommand, ValueEnum};
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde_json::json;

/// Compositional scene dynamics: data generation, training, evaluation and
/// planning.
#[derive(Parser)]
#[command(name = "cdyn", version)]
struct Cli {
    /// Flat `key = value` config file; unspecified keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads. Every command currently runs on one thread, which is
    /// also the bit-reproducible mode.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trajectory dataset.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// Overrides `n_scenes`.
        #[arg(long)]
        scenes: Option<usize>,
        /// Boxes per scene; overrides `n_objects`.
        #[arg(long)]
        objects: Option<usize>,
    },
    /// Train the auto-encoder.
    TrainAe {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `ae_steps`.
        #[arg(long)]
        steps: Option<usize>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train the dynamics model on a frozen auto-encoder.
    TrainGnn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `gnn_steps`.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Render reconstructions of one frame in every view.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        scene: usize,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll the model forward under a recorded trajectory's pusher motion.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        scene: usize,
        #[arg(long)]
        steps: usize,
        /// Views to render, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        views: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multi-step prediction error curves for the full model and the dense
    /// adjacency ablation.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Separately trained dense-adjacency model; defaults to
        /// `--checkpoint` run with dense adjacency.
        #[arg(long)]
        dense_checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `horizon`.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Plan a push sequence that brings objects into goal regions.
    Plan {
        #[arg(long, value_enum, default_value_t = PlanMode::Oracle)]
        mode: PlanMode,
        /// Goal regions as JSON (`{"regions": [{"min", "max", "color"}]}`).
        /// Oracle mode without a goal file plans the one-box task drawn
        /// from `--seed`.
        #[arg(long)]
        goal: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        budget: usize,
        /// Control-tree ablation: expand uniformly chosen nodes.
        #[arg(long)]
        uniform: bool,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        scene: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanMode {
    Learned,
    Oracle,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<HarnessConfig> {
    Ok(match path {
        Some(p) => HarnessConfig::from_file(p)?,
        None => HarnessConfig::default(),
    })
}

fn load_data(path: &Path) -> anyhow::Result<Vec<Trajectory>> {
    let data = load_dataset(path).with_context(|| format!("reading dataset {}", path.display()))?;
    if data.is_empty() {
        bail!("dataset {} contains no trajectories", path.display());
    }
    Ok(data)
}

fn trajectory<'a>(data: &'a [Trajectory], scene: usize) -> anyhow::Result<&'a Trajectory> {
    data.get(scene)
        .with_context(|| format!("scene {scene} out of range (dataset has {})", data.len()))
}

fn render_views(model: &Model<f32>, z: &LatentSet<f32>, rig: &CameraRig, views: &[usize], n: usize) -> anyhow::Result<Vec<cdyn_core::Image>> {
    views
        .iter()
        .map(|&i| {
            let cam = rig.cameras.get(i).with_context(|| format!("view {i} out of range"))?;
            Ok(render_image(&model.store, &model.decoder, z, cam, &model.grid.bounds, n, None)?)
        })
        .collect()
}

fn run(cli: Cli) -> anyhow::Result<serde_json::Value> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if cli.threads != 1 {
        log::info!("--threads {} requested; running single-threaded", cli.threads);
    }
    match cli.command {
        Command::GenData { out, scenes, objects } => {
            let n_scenes = scenes.unwrap_or(cfg.n_scenes);
            let n_objects = objects.unwrap_or(cfg.n_objects);
            let rig = CameraRig::ring(&cfg.forge)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let data = generate_dataset(&mut rng, n_scenes, n_objects, &rig, &cfg.forge)?;
            save_dataset(&out, &data)?;
            let frames: usize = data.iter().map(|t| t.len()).sum();
            Ok(json!({"command": "gen-data", "out": out, "scenes": data.len(), "frames": frames, "objects": n_objects, "seed": cli.seed}))
        }
        Command::TrainAe { data, out, steps, resume } => {
            if let Some(s) = steps {
                cfg.train.ae_steps = s;
            }
            let ck = resume.as_deref().map(Checkpoint::load).transpose()?;
            let dataset = load_data(&data)?;
            let mut last = f64::NAN;
            let t = train_autoencoder(&dataset, &cfg, cli.seed, ck.as_ref(), &out, |step, loss| {
                last = loss;
                if step % 100 == 0 {
                    log::info!("ae step {step} loss {loss:.6}");
                }
            })?;
            Ok(json!({"command": "train-ae", "out": out, "steps": t.step, "final_loss": last}))
        }
        Command::TrainGnn { data, ae, out, steps } => {
            if let Some(s) = steps {
                cfg.train.gnn_steps = s;
            }
            let ck = Checkpoint::load(&ae)?;
            let dataset = load_data(&data)?;
            let mut last = f64::NAN;
            let (t, cache) = train_dynamics(&dataset, &ck, &cfg, cli.seed, &out, |step, loss| {
                last = loss;
                if step % 100 == 0 {
                    log::info!("gnn step {step} loss {loss:.6}");
                }
            })?;
            let pairs: usize = cache.trajectories.iter().map(|c| c.adjacency.len()).sum();
            Ok(json!({"command": "train-gnn", "out": out, "steps": t.step, "pairs": pairs, "final_loss": last}))
        }
        Command::Render { checkpoint, data, scene, frame, out } => {
            let (run_cfg, model) = load_model(&Checkpoint::load(&checkpoint)?)?;
            let dataset = load_data(&data)?;
            let traj = trajectory(&dataset, scene)?;
            if frame >= traj.len() {
                bail!("frame {frame} out of range (scene has {})", traj.len());
            }
            let z = model.encoder.encode_scene(&model.store, &traj.views(frame), &model.grid)?;
            let views: Vec<usize> = (0..traj.rig.cameras.len()).collect();
            let imgs = render_views(&model, &z, &traj.rig, &views, run_cfg.eval.n_samples)?;
            std::fs::create_dir_all(&out)?;
            let mut mse = Vec::new();
            for (i, img) in imgs.iter().enumerate() {
                save_image(&out.join(format!("view_{i}.png")), img)?;
                let f = &traj.frames[frame];
                let total = Mask::union(&f.masks[i], img.width, img.height);
                let px = total.dilate(run_cfg.eval.region_dilation).pixels();
                mse.push(cdyn_core::render::masked_mse(img, &f.images[i].masked(&total), &px));
            }
            Ok(json!({"command": "render", "out": out, "views": imgs.len(), "masked_mse": StepStats::of(&mse).mean}))
        }
        Command::Predict { checkpoint, data, scene, steps, views, out } => {
            let (run_cfg, model) = load_model(&Checkpoint::load(&checkpoint)?)?;
            let dataset = load_data(&data)?;
            let traj = trajectory(&dataset, scene)?;
            if traj.displacements.len() < steps {
                bail!("scene {scene} records only {} pusher motions, {steps} requested", traj.displacements.len());
            }
            let actions: Vec<RigidTransform> = traj.displacements[..steps]
                .iter()
                .map(|d| RigidTransform::planar(d[0], d[1], 0.0))
                .collect();
            let predictor = model.predictor(&run_cfg.dynamics);
            let rollout = predictor.forward_predict(&traj.views(0), &actions, traj.articulated)?;
            std::fs::create_dir_all(&out)?;
            let mut written = 0;
            for (t, z) in rollout.iter().enumerate().skip(1) {
                for (&i, img) in views.iter().zip(render_views(&model, z, &traj.rig, &views, run_cfg.eval.n_samples)?) {
                    save_image(&out.join(format!("step_{t:03}_view_{i}.png")), &img)?;
                    written += 1;
                }
            }
            Ok(json!({"command": "predict", "out": out, "steps": steps, "views": views, "images": written}))
        }
        Command::Eval { checkpoint, dense_checkpoint, data, out, horizon } => {
            let (run_cfg, ours) = load_model(&Checkpoint::load(&checkpoint)?)?;
            let dense_model = match &dense_checkpoint {
                Some(p) => Some(load_model(&Checkpoint::load(p)?)?.1),
                None => None,
            };
            let dataset = load_data(&data)?;
            let mut eval_cfg = run_cfg.eval.clone();
            if let Some(h) = horizon {
                eval_cfg.horizon = h;
            }
            let mut dense_dyn = run_cfg.dynamics.clone();
            dense_dyn.adjacency_mode = AdjacencyMode::Dense;
            let modes = [
                EvalMode {
                    name: "ours".into(),
                    model: &ours,
                    dynamics: run_cfg.dynamics.clone(),
                },
                EvalMode {
                    name: "dense".into(),
                    model: dense_model.as_ref().unwrap_or(&ours),
                    dynamics: dense_dyn,
                },
            ];
            let reports = evaluate_rollouts(&dataset, &modes, &eval_cfg)?;
            write_reports(&reports, &out)?;
            let h = eval_cfg.horizon;
            let summary: Vec<_> = reports
                .iter()
                .map(|r| {
                    let img = EvalReport::stats(&r.image_mse);
                    let com = EvalReport::stats(&r.com_error);
                    json!({
                        "mode": r.mode,
                        "dynamics": r.dynamics,
                        "step0_mse": img.first().map(|s| s.mean),
                        "terminal_median_mse": img.get(h).map(|s| s.median),
                        "terminal_com_error": com.get(h).map(|s| s.mean),
                    })
                })
                .collect();
            Ok(json!({"command": "eval", "out": out, "horizon": h, "scenes": reports[0].scenes,
                "skipped": reports[0].skipped, "commit": reports[0].commit, "modes": summary}))
        }
        Command::Plan { mode, goal, budget, uniform, checkpoint, data, scene, out } => {
            let rrt = RrtConfig {
                budget,
                selection: if uniform { Selection::UniformNode } else { Selection::GoalBiased },
                ..RrtConfig::default()
            };
            let goal_file: Option<GoalSpec> = match &goal {
                Some(p) => Some(
                    serde_json::from_str(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
                        .with_context(|| format!("parsing goal file {}", p.display()))?,
                ),
                None => None,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            std::fs::create_dir_all(&out)?;
            let (actions, samples, best_cost, frames) = match mode {
                PlanMode::Oracle => {
                    let task = one_object_task(cli.seed, &cfg.forge)?;
                    let goal = goal_file.unwrap_or(task.goal);
                    let world = OracleWorld {
                        forge: cfg.forge.clone(),
                        articulated: task.scene.pusher,
                    };
                    let r = rrt_plan(&world, task.scene, &goal, &rrt, &mut rng)?;
                    let rig = CameraRig::ring(&cfg.forge)?;
                    let end = r.best_node;
                    let mut frames = 0;
                    for (t, &node) in r.tree.path(end).iter().enumerate() {
                        let views = render_ground_truth(&r.tree.node(node).state, &rig, &cfg.forge);
                        save_image(&out.join(format!("step_{t:03}.png")), &views[0].image)?;
                        frames += 1;
                    }
                    (r.actions.clone(), r.samples, r.best_cost, frames)
                }
                PlanMode::Learned => {
                    let (Some(ck), Some(data)) = (checkpoint, data) else {
                        bail!("learned planning needs --checkpoint and --data");
                    };
                    let Some(goal) = goal_file else {
                        bail!("learned planning needs --goal");
                    };
                    let (run_cfg, model) = load_model(&Checkpoint::load(&ck)?)?;
                    let dataset = load_data(&data)?;
                    let traj = trajectory(&dataset, scene)?;
                    let world = LearnedWorld::new(model.predictor(&run_cfg.dynamics), traj.views(0), traj.articulated);
                    let root = world.initial_state()?;
                    let r = rrt_plan(&world, root, &goal, &rrt, &mut rng)?;
                    let mut frames = 0;
                    for (t, &node) in r.tree.path(r.best_node).iter().enumerate() {
                        let z = &r.tree.node(node).state.z;
                        let img = render_views(&model, z, &traj.rig, &[0], run_cfg.eval.n_samples)?;
                        save_image(&out.join(format!("step_{t:03}.png")), &img[0])?;
                        frames += 1;
                    }
                    (r.actions.clone(), r.samples, r.best_cost, frames)
                }
            };
            let plan_path = out.join("plan.json");
            std::fs::write(&plan_path, serde_json::to_string_pretty(&json!({"actions": actions}))?)?;
            Ok(json!({"command": "plan", "out": out, "solved": actions.is_some(),
                "steps": actions.as_ref().map(|a| a.len()), "samples": samples, "best_cost": best_cost, "frames": frames}))
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => println!("{summary}"),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
