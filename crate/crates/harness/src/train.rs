//! Two-phase training: the auto-encoder first, then the GNN on cached
//! latents with the auto-encoder frozen.

use std::io::Write;
use std::path::{Path, PathBuf};

use cdyn_autodiff::{Adam, AdamConfig, ParamId, Tape};
use cdyn_core::dynamics::{gnn_batch_loss, trajectory_samples, AdjacencyEstimator, GnnSample};
use cdyn_core::{Adjacency, LatentSet, Model};
use cdyn_scene::Trajectory;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::binio::{Reader, Writer};
use crate::checkpoint::{Checkpoint, OptimizerState, Progress};
use crate::config::HarnessConfig;
use crate::error::{HarnessError, Result};

/// Rejects datasets the samplers cannot draw from.
pub fn check_dataset(dataset: &[Trajectory], label: &str) -> Result<()> {
    if dataset.is_empty() || dataset.iter().any(|t| t.is_empty()) {
        return Err(HarnessError::EmptyDataset(label.into()));
    }
    Ok(())
}

/// Uniform `(scene, frame, view)` for one auto-encoder minibatch.
pub fn sample_minibatch<R: Rng + ?Sized>(rng: &mut R, dataset: &[Trajectory]) -> (usize, usize, usize) {
    let s = rng.gen_range(0..dataset.len());
    let f = rng.gen_range(0..dataset[s].len());
    let v = rng.gen_range(0..dataset[s].frames[f].images.len());
    (s, f, v)
}

fn model_from(cfg: &HarnessConfig, ck: &Checkpoint) -> Result<HarnessConfig> {
    let stored = HarnessConfig::parse(&ck.config)?;
    if stored.model != cfg.model {
        return Err(HarnessError::format(
            "checkpoint",
            "network shapes in the checkpoint differ from the current config",
        ));
    }
    Ok(stored)
}

fn loss_log(path: &Path, resume: bool) -> Result<std::fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    }
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(resume)
        .truncate(!resume)
        .open(path)
        .map_err(HarnessError::io(path))?;
    if !resume {
        writeln!(f, "step,loss").map_err(HarnessError::io(path))?;
    }
    Ok(f)
}

/// CSV loss log that sits next to a checkpoint file.
pub fn loss_path(checkpoint: &Path) -> PathBuf {
    let stem = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("train");
    checkpoint.with_file_name(format!("{stem}_loss.csv"))
}

pub struct AeTrainer {
    pub config: HarnessConfig,
    pub model: Model<f32>,
    pub adam: Adam<f32>,
    pub rng: ChaCha8Rng,
    pub step: u64,
    params: Vec<ParamId>,
}

impl AeTrainer {
    pub fn new(config: &HarnessConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Model::new(config.model.clone(), &mut rng)?;
        let params = model.ae_params();
        let adam = Adam::new(
            &model.store,
            params.clone(),
            AdamConfig {
                lr: config.train.ae_lr,
                ..AdamConfig::default()
            },
        );
        Ok(Self {
            config: config.clone(),
            model,
            adam,
            rng,
            step: 0,
            params,
        })
    }

    /// Continues exactly where `ck` stopped. Schedule settings (step count,
    /// checkpoint interval) come from `config`; everything else from `ck`.
    pub fn resume(config: &HarnessConfig, ck: &Checkpoint) -> Result<Self> {
        let stored = model_from(config, ck)?;
        let mut t = Self::new(&stored, 0)?;
        t.config.train = config.train.clone();
        ck.load_params(&mut t.model.store)?;
        t.adam = ck
            .optimizer("ae")
            .ok_or_else(|| HarnessError::format("checkpoint", "no auto-encoder optimizer state"))?
            .restore(&t.model.store)?;
        t.rng = ck.rng.restore();
        t.step = ck.progress.ae_steps;
        Ok(t)
    }

    /// One minibatch: a random frame, all its views encoded, one random
    /// view reconstructed on a ray subset.
    pub fn step(&mut self, dataset: &[Trajectory]) -> Result<f64> {
        let (s, f, v) = sample_minibatch(&mut self.rng, dataset);
        let views = dataset[s].views(f);
        let tape = Tape::new();
        let loss = self
            .model
            .ae_loss_var(&tape, &views, v, &self.config.render, &mut self.rng)?;
        let value = tape.value(loss).item() as f64;
        if tape.requires_grad(loss) {
            self.model.store.zero_grad(&self.params);
            tape.backward(loss, &mut self.model.store)?;
            self.adam.step(&mut self.model.store)?;
        }
        self.step += 1;
        Ok(value)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(
            self.config.to_text(),
            &self.rng,
            Progress {
                ae_steps: self.step,
                gnn_steps: 0,
            },
            &self.model.store,
        );
        ck.optimizers.push(OptimizerState::capture("ae", &self.adam, &self.model.store));
        ck
    }
}

/// Runs the auto-encoder phase until `config.train.ae_steps`, saving to
/// `out` every `checkpoint_every` steps and at the end. The loss log goes
/// to [`loss_path`]`(out)`.
pub fn train_autoencoder(
    dataset: &[Trajectory],
    config: &HarnessConfig,
    seed: u64,
    resume: Option<&Checkpoint>,
    out: &Path,
    mut on_step: impl FnMut(u64, f64),
) -> Result<AeTrainer> {
    check_dataset(dataset, &out.display().to_string())?;
    let mut trainer = match resume {
        Some(ck) => AeTrainer::resume(config, ck)?,
        None => AeTrainer::new(config, seed)?,
    };
    let log_path = loss_path(out);
    let mut log = loss_log(&log_path, resume.is_some())?;
    let every = config.train.checkpoint_every.max(1) as u64;
    while trainer.step < config.train.ae_steps as u64 {
        let loss = trainer.step(dataset)?;
        writeln!(log, "{},{}", trainer.step, loss).map_err(HarnessError::io(&log_path))?;
        on_step(trainer.step, loss);
        if trainer.step % every == 0 {
            trainer.checkpoint().save(out)?;
        }
    }
    trainer.checkpoint().save(out)?;
    Ok(trainer)
}

/// Encoded trajectories plus the adjacency of every training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct CachedTrajectory {
    pub articulated: usize,
    pub latents: Vec<LatentSet<f32>>,
    /// One per consecutive frame pair, estimated on the intervened input.
    pub adjacency: Vec<Adjacency>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LatentCache {
    pub trajectories: Vec<CachedTrajectory>,
}

const CACHE_MAGIC: &[u8; 8] = b"CDYNLATC";
const CACHE_VERSION: u32 = 1;

impl LatentCache {
    /// Encodes every frame once and estimates the training adjacency with
    /// `dilation_voxels` around the decoded occupancies.
    pub fn build(model: &Model<f32>, dataset: &[Trajectory], kappa: f64, dilation: usize) -> Result<Self> {
        let mut out = Vec::with_capacity(dataset.len());
        for traj in dataset {
            let latents = (0..traj.len())
                .map(|t| model.encoder.encode_scene(&model.store, &traj.views(t), &model.grid))
                .collect::<cdyn_core::Result<Vec<_>>>()?;
            let mut est = AdjacencyEstimator::new(&model.decoder, &model.store, &model.grid, kappa);
            let samples = trajectory_samples(&latents, traj.articulated, &mut |z| est.estimate(z, dilation))?;
            out.push(CachedTrajectory {
                articulated: traj.articulated,
                latents,
                adjacency: samples.into_iter().map(|s| s.adjacency).collect(),
            });
        }
        Ok(Self { trajectories: out })
    }

    pub fn samples(&self) -> Result<Vec<GnnSample<f32>>> {
        let mut out = Vec::new();
        for c in &self.trajectories {
            let mut k = 0;
            let mut stored = |_: &cdyn_autodiff::Tensor<f32>| {
                k += 1;
                c.adjacency
                    .get(k - 1)
                    .cloned()
                    .ok_or_else(|| cdyn_core::CoreError::Config("latent cache adjacency count mismatch".into()))
            };
            out.extend(trajectory_samples(&c.latents, c.articulated, &mut stored)?);
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(CACHE_MAGIC);
        w.u32(CACHE_VERSION);
        w.len(self.trajectories.len());
        for c in &self.trajectories {
            w.len(c.articulated);
            w.len(c.latents.len());
            for z in &c.latents {
                w.shape(z.tensor().shape());
                w.f32s(z.tensor().data());
            }
            w.len(c.adjacency.len());
            for a in &c.adjacency {
                let m = a.len();
                w.len(m);
                let bits: Vec<u8> = (0..m * m).map(|k| a.get(k / m, k % m) as u8).collect();
                w.bytes(&bits);
            }
        }
        w.buf
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new(data, "latent cache");
        if r.bytes(8)? != CACHE_MAGIC {
            return Err(r.err("bad magic"));
        }
        let version = r.u32()?;
        if version != CACHE_VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let n = r.len(1)?;
        let mut trajectories = Vec::with_capacity(n);
        for _ in 0..n {
            let articulated = r.u64()? as usize;
            let frames = r.len(1)?;
            let mut latents = Vec::with_capacity(frames);
            for _ in 0..frames {
                let shape = r.shape()?;
                let t = cdyn_autodiff::Tensor::new(&shape, r.f32s()?)?;
                latents.push(LatentSet::from_tensor(t)?);
            }
            let pairs = r.len(1)?;
            let mut adjacency = Vec::with_capacity(pairs);
            for _ in 0..pairs {
                let m = r.len(1)?;
                let bits = r.bytes(m * m)?;
                adjacency.push(Adjacency::from_fn(m, |i, j| bits[i * m + j] != 0));
            }
            trajectories.push(CachedTrajectory {
                articulated,
                latents,
                adjacency,
            });
        }
        r.finish()?;
        Ok(Self { trajectories })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(HarnessError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(HarnessError::io(path))?)
    }
}

pub struct GnnTrainer {
    pub config: HarnessConfig,
    pub model: Model<f32>,
    pub adam: Adam<f32>,
    pub rng: ChaCha8Rng,
    pub step: u64,
    ae_steps: u64,
    params: Vec<ParamId>,
}

impl GnnTrainer {
    /// Fresh dynamics weights drawn from `seed` on top of the auto-encoder
    /// in `ae`.
    pub fn new(config: &HarnessConfig, ae: &Checkpoint, seed: u64) -> Result<Self> {
        model_from(config, ae)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Model::new(config.model.clone(), &mut rng)?;
        ae.load_params(&mut model.store)?;
        model.reset_dynamics(&mut rng);
        Ok(Self::assemble(config.clone(), model, rng, 0, ae.progress.ae_steps))
    }

    fn assemble(config: HarnessConfig, mut model: Model<f32>, rng: ChaCha8Rng, step: u64, ae_steps: u64) -> Self {
        let params = model.gnn_params();
        model.store.set_requires_grad(&model.ae_params(), false);
        let adam = Adam::new(
            &model.store,
            params.clone(),
            AdamConfig {
                lr: config.train.gnn_lr,
                ..AdamConfig::default()
            },
        );
        Self {
            config,
            model,
            adam,
            rng,
            step,
            ae_steps,
            params,
        }
    }

    pub fn resume(config: &HarnessConfig, ck: &Checkpoint) -> Result<Self> {
        let mut stored = model_from(config, ck)?;
        stored.train = config.train.clone();
        stored.dynamics = config.dynamics.clone();
        let mut model = Model::new(stored.model.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
        ck.load_params(&mut model.store)?;
        let mut t = Self::assemble(stored, model, ck.rng.restore(), ck.progress.gnn_steps, ck.progress.ae_steps);
        t.adam = ck
            .optimizer("gnn")
            .ok_or_else(|| HarnessError::format("checkpoint", "no dynamics optimizer state"))?
            .restore(&t.model.store)?;
        Ok(t)
    }

    /// One Adam step on a minibatch drawn with replacement.
    pub fn step(&mut self, samples: &[GnnSample<f32>]) -> Result<f64> {
        if samples.is_empty() {
            return Err(HarnessError::EmptyDataset("GNN training samples".into()));
        }
        let batch: Vec<&GnnSample<f32>> = (0..self.config.train.gnn_batch.max(1))
            .map(|_| &samples[self.rng.gen_range(0..samples.len())])
            .collect();
        let d = &self.config.dynamics;
        let tape = Tape::new();
        let loss = gnn_batch_loss(
            &tape,
            &self.model.store,
            &self.model.dynamics,
            &batch,
            d.passes,
            d.quasi_static,
        )?;
        let value = tape.value(loss).item() as f64;
        if tape.requires_grad(loss) {
            self.model.store.zero_grad(&self.params);
            tape.backward(loss, &mut self.model.store)?;
            self.adam.step(&mut self.model.store)?;
        }
        self.step += 1;
        Ok(value)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(
            self.config.to_text(),
            &self.rng,
            Progress {
                ae_steps: self.ae_steps,
                gnn_steps: self.step,
            },
            &self.model.store,
        );
        ck.optimizers.push(OptimizerState::capture("gnn", &self.adam, &self.model.store));
        ck
    }
}

/// Runs the dynamics phase: encodes `dataset` once into a latent cache
/// (saved next to `out` as `<stem>_latents.bin`), then trains the GNN
/// until `config.train.gnn_steps`.
pub fn train_dynamics(
    dataset: &[Trajectory],
    ae: &Checkpoint,
    config: &HarnessConfig,
    seed: u64,
    out: &Path,
    mut on_step: impl FnMut(u64, f64),
) -> Result<(GnnTrainer, LatentCache)> {
    check_dataset(dataset, &out.display().to_string())?;
    let mut trainer = GnnTrainer::new(config, ae, seed)?;
    let d = &config.dynamics;
    let cache = LatentCache::build(&trainer.model, dataset, d.kappa, d.dilation_voxels)?;
    let log_path = loss_path(out);
    let mut log = loss_log(&log_path, false)?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("gnn");
    cache.save(&out.with_file_name(format!("{stem}_latents.bin")))?;
    let samples = cache.samples()?;
    let every = config.train.checkpoint_every.max(1) as u64;
    while trainer.step < config.train.gnn_steps as u64 {
        let loss = trainer.step(&samples)?;
        writeln!(log, "{},{}", trainer.step, loss).map_err(HarnessError::io(&log_path))?;
        on_step(trainer.step, loss);
        if trainer.step % every == 0 {
            trainer.checkpoint().save(out)?;
        }
    }
    trainer.checkpoint().save(out)?;
    Ok((trainer, cache))
}

/// Rebuilds the model stored in a checkpoint.
pub fn load_model(ck: &Checkpoint) -> Result<(HarnessConfig, Model<f32>)> {
    let cfg = HarnessConfig::parse(&ck.config)?;
    let mut model = Model::new(cfg.model.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
    ck.load_params(&mut model.store)?;
    Ok((cfg, model))
}
