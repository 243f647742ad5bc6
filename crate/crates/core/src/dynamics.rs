//! Latent graph dynamics: edge network `F_e`, node network `F_z`, L-pass
//! message passing, interventions and multi-step rollouts.

use std::rc::Rc;

use cdyn_autodiff::{Adam, AdamConfig, Init, Linear, Mlp, ParamId, ParamStore, Real, Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::config::{AdjacencyMode, DynamicsConfig, ModelConfig};
use crate::decoder::{collision_adjacency, Adjacency, Decoder, Occupancy};
use crate::encoder::Encoder;
use crate::error::{CoreError, Result};
use crate::geometry::{RigidTransform, WorkspaceGrid};
use crate::image::PosedView;
use crate::latent::LatentSet;

const NODE_OUTPUT_INIT_SCALE: f64 = 0.01;

/// `F_e(z_i, z_j)` and `F_z(z_i^t, msg_i)`.
///
/// The first layer of `F_e` on `concat(z_i, z_j)` is stored as a receiver
/// block and a sender block, so each node is projected once per pass.
/// `F_z` predicts a residual on `z_i^t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dynamics {
    edge_recv: Linear,
    edge_send: Linear,
    edge_rest: Mlp,
    node: Mlp,
    latent_dim: usize,
    edge_dim: usize,
}

impl Dynamics {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let k = cfg.latent_dim;
        let h = cfg.edge_hidden;
        let edge_recv = Linear::new(store, &format!("{name}.edge_recv"), k, h, true, Init::He, rng);
        let edge_send = Linear::new(store, &format!("{name}.edge_send"), k, h, false, Init::He, rng);
        let mut widths = vec![h; cfg.edge_layers];
        widths.push(cfg.edge_dim);
        let edge_rest = Mlp::new(store, &format!("{name}.edge"), &widths, rng);
        let mut widths = vec![k + cfg.edge_dim];
        widths.extend(std::iter::repeat(cfg.node_hidden).take(cfg.node_layers));
        widths.push(k);
        let node = Mlp::new(store, &format!("{name}.node"), &widths, rng);
        // Start close to the identity map so the untrained model copies z^t.
        let last = node.layers.last().unwrap().weight;
        let w = store.value(last).map(|v| v * T::lit(NODE_OUTPUT_INIT_SCALE));
        *store.get_mut(last).value_mut() = w;
        Self {
            edge_recv,
            edge_send,
            edge_rest,
            node,
            latent_dim: k,
            edge_dim: cfg.edge_dim,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.edge_recv.params();
        p.extend(self.edge_send.params());
        p.extend(self.edge_rest.params());
        p.extend(self.node.params());
        p
    }

    pub fn edge_dim(&self) -> usize {
        self.edge_dim
    }

    /// Edge features `[E, n_e]` for ordered pairs `(receiver, sender)`.
    pub fn edges_var<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        z: Var,
        pairs: &[(usize, usize)],
    ) -> Result<Var> {
        let recv: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let send: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let r = self.edge_recv.forward(tape, store, z)?;
        let s = self.edge_send.forward(tape, store, z)?;
        let h = tape.add(tape.gather_rows(r, &recv)?, tape.gather_rows(s, &send)?)?;
        Ok(self.edge_rest.forward(tape, store, tape.relu(h))?)
    }

    /// `e_ij` for a single ordered pair (inference).
    pub fn edge_feature<T: Real>(&self, store: &ParamStore<T>, zi: &[T], zj: &[T]) -> Result<Vec<T>> {
        let tape = Tape::inference();
        let z = tape.constant(Tensor::from_rows(&[zi.to_vec(), zj.to_vec()])?);
        let e = self.edges_var(&tape, store, z, &[(0, 1)])?;
        let out = tape.value(e).data().to_vec();
        Ok(out)
    }

    /// Summed incoming messages `[m, n_e]` over the listed edges.
    fn messages<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        z: Var,
        m: usize,
        pairs: &[(usize, usize)],
    ) -> Result<Var> {
        if pairs.is_empty() {
            return Ok(tape.constant(Tensor::zeros(&[m, self.edge_dim])?));
        }
        let e = self.edges_var(tape, store, z, pairs)?;
        let recv: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        Ok(tape.scatter_add_rows(e, &recv, m)?)
    }

    /// `z_i^t + F_z(z_i^t, msg_i)` for all rows.
    fn node_update<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        z0: Var,
        msg: Var,
    ) -> Result<Var> {
        let inp = tape.concat_cols(&[z0, msg])?;
        let delta = self.node.forward(tape, store, inp)?;
        Ok(tape.add(z0, delta)?)
    }

    /// L-pass propagation from `z0` (`[m, k]`, already intervened).
    ///
    /// `adjacency(pass, current)` supplies the graph for each pass. Rows in
    /// `frozen` pass through unchanged; with `quasi_static`, rows whose
    /// adjacency row is empty at every pass are reset to `z0` exactly.
    pub fn propagate_var<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        z0: Var,
        frozen: &[bool],
        passes: usize,
        quasi_static: bool,
        adjacency: &mut dyn FnMut(usize, &Tensor<T>) -> Result<Adjacency>,
    ) -> Result<(Var, Vec<Adjacency>)> {
        let m = tape.shape(z0)[0];
        if frozen.len() != m {
            return Err(CoreError::Config(format!(
                "frozen mask has {} entries for {m} objects",
                frozen.len()
            )));
        }
        let mut cur = z0;
        let mut graphs = Vec::with_capacity(passes);
        let mut isolated = vec![true; m];
        for pass in 0..passes {
            let adj = adjacency(pass, &tape.value(cur))?;
            let mut pairs = Vec::new();
            for i in (0..m).filter(|&i| !frozen[i]) {
                for j in 0..m {
                    if adj.get(i, j) {
                        pairs.push((i, j));
                        isolated[i] = false;
                    }
                }
            }
            let msg = self.messages(tape, store, cur, m, &pairs)?;
            let upd = self.node_update(tape, store, z0, msg)?;
            cur = merge_rows(tape, z0, upd, frozen)?;
            graphs.push(adj);
        }
        if quasi_static {
            let keep: Vec<bool> = (0..m).map(|i| frozen[i] || isolated[i]).collect();
            cur = merge_rows(tape, z0, cur, &keep)?;
        }
        Ok((cur, graphs))
    }

    /// One prediction step without gradients.
    pub fn propagate<T: Real>(
        &self,
        store: &ParamStore<T>,
        z0: &LatentSet<T>,
        frozen: &[bool],
        passes: usize,
        quasi_static: bool,
        adjacency: &mut dyn FnMut(usize, &Tensor<T>) -> Result<Adjacency>,
    ) -> Result<(LatentSet<T>, Vec<Adjacency>)> {
        let tape = Tape::inference();
        let z = tape.constant(z0.tensor().clone());
        let (out, graphs) = self.propagate_var(&tape, store, z, frozen, passes, quasi_static, adjacency)?;
        let value = (*tape.value(out)).clone();
        Ok((LatentSet::from_tensor(value)?, graphs))
    }
}

/// Row `i` from `base` where `keep[i]`, else from `other`.
fn merge_rows<T: Real>(tape: &Tape<T>, base: Var, other: Var, keep: &[bool]) -> Result<Var> {
    if keep.iter().all(|&k| k) {
        return Ok(base);
    }
    if !keep.iter().any(|&k| k) {
        return Ok(other);
    }
    let m = keep.len();
    let idx: Vec<usize> = (0..m).map(|i| if keep[i] { i } else { m + i }).collect();
    let both = tape.concat_rows(&[base, other])?;
    Ok(tape.gather_rows(both, &idx)?)
}

/// Collision adjacency from decoded occupancies, re-decoding an object only
/// when its latent row changed.
pub struct AdjacencyEstimator<'a, T: Real> {
    decoder: &'a Decoder,
    store: &'a ParamStore<T>,
    grid: &'a WorkspaceGrid,
    kappa: f64,
    cache: Vec<Option<(Vec<T>, Occupancy)>>,
}

impl<'a, T: Real> AdjacencyEstimator<'a, T> {
    pub fn new(decoder: &'a Decoder, store: &'a ParamStore<T>, grid: &'a WorkspaceGrid, kappa: f64) -> Self {
        Self {
            decoder,
            store,
            grid,
            kappa,
            cache: Vec::new(),
        }
    }

    pub fn occupancies(&mut self, z: &Tensor<T>) -> Result<Vec<Occupancy>> {
        let (m, _) = z.dims2()?;
        if self.cache.len() != m {
            self.cache = vec![None; m];
        }
        let mut out = Vec::with_capacity(m);
        for j in 0..m {
            let row = z.row(j);
            let hit = matches!(&self.cache[j], Some((r, _)) if r.as_slice() == row);
            if !hit {
                let single = LatentSet::from_rows(&[row.to_vec()])?;
                let rad = self.decoder.grid_radiance(self.store, self.grid, &single)?;
                let occ = Occupancy::from_density(self.grid.dims, &rad[0].sigma, self.kappa);
                self.cache[j] = Some((row.to_vec(), occ));
            }
            out.push(self.cache[j].as_ref().unwrap().1.clone());
        }
        Ok(out)
    }

    pub fn estimate(&mut self, z: &Tensor<T>, dilation: usize) -> Result<Adjacency> {
        let occ = self.occupancies(z)?;
        Ok(collision_adjacency(&occ, dilation))
    }
}

/// Everything needed to run the learned dynamics on observations.
pub struct Predictor<'a, T: Real> {
    pub encoder: &'a Encoder,
    pub decoder: &'a Decoder,
    pub dynamics: &'a Dynamics,
    pub store: &'a ParamStore<T>,
    pub grid: &'a WorkspaceGrid,
    pub config: &'a DynamicsConfig,
}

impl<'a, T: Real> Predictor<'a, T> {
    /// `z_a` re-encoded through the cumulative transform `q`.
    pub fn intervene(&self, views: &[PosedView], articulated: usize, q: &RigidTransform) -> Result<Vec<T>> {
        self.encoder.transform_latent(self.store, views, articulated, self.grid, q)
    }

    /// One `F_GNN` step from `z` with the articulated row already replaced.
    pub fn step(&self, z0: &LatentSet<T>, articulated: usize) -> Result<(LatentSet<T>, Vec<Adjacency>)> {
        let m = z0.len();
        if articulated >= m {
            return Err(CoreError::ArticulatedIndex { index: articulated, m });
        }
        let frozen: Vec<bool> = (0..m).map(|i| i == articulated).collect();
        let mut est = AdjacencyEstimator::new(self.decoder, self.store, self.grid, self.config.kappa);
        let cfg = self.config;
        let mut once: Option<Adjacency> = None;
        let mut source = |_pass: usize, cur: &Tensor<T>| -> Result<Adjacency> {
            match cfg.adjacency_mode {
                AdjacencyMode::Dense => Ok(Adjacency::dense(m)),
                AdjacencyMode::InLoop => est.estimate(cur, cfg.in_loop_dilation),
                AdjacencyMode::OncePerStep => {
                    if once.is_none() {
                        once = Some(est.estimate(cur, cfg.dilation_voxels)?);
                    }
                    Ok(once.clone().unwrap())
                }
            }
        };
        self.dynamics
            .propagate(self.store, z0, &frozen, cfg.passes, cfg.quasi_static, &mut source)
    }

    /// Rollout from the initial views under a sequence of pusher motions.
    /// Entry 0 is the encoding of `views`; entry `t` follows action `t`.
    pub fn forward_predict(
        &self,
        views: &[PosedView],
        actions: &[RigidTransform],
        articulated: usize,
    ) -> Result<Vec<LatentSet<T>>> {
        let z = self.encoder.encode_scene(self.store, views, self.grid)?;
        self.rollout_from(z, views, actions, articulated)
    }

    /// Like [`Self::forward_predict`] with an already encoded initial state.
    pub fn rollout_from(
        &self,
        initial: LatentSet<T>,
        views: &[PosedView],
        actions: &[RigidTransform],
        articulated: usize,
    ) -> Result<Vec<LatentSet<T>>> {
        let mut out = vec![initial];
        let mut q = RigidTransform::identity();
        for action in actions {
            q = q.then(action);
            let za = self.intervene(views, articulated, &q)?;
            let z0 = out.last().unwrap().with_row(articulated, &za)?;
            let (next, _) = self.step(&z0, articulated)?;
            out.push(next);
        }
        Ok(out)
    }
}

/// One training pair for the one-step objective.
#[derive(Clone, Debug)]
pub struct GnnSample<T> {
    /// `z^t` with the articulated row replaced by its observed `z^{t+1}_a`.
    pub input: Tensor<T>,
    pub target: Tensor<T>,
    pub articulated: usize,
    pub adjacency: Adjacency,
}

/// Builds training pairs from an encoded trajectory. `adjacency` receives
/// the intervened input of each pair. Returns nothing for trajectories
/// shorter than two frames.
pub fn trajectory_samples<T: Real>(
    frames: &[LatentSet<T>],
    articulated: usize,
    adjacency: &mut dyn FnMut(&Tensor<T>) -> Result<Adjacency>,
) -> Result<Vec<GnnSample<T>>> {
    if frames.len() < 2 {
        log::warn!("skipping trajectory with {} frame(s)", frames.len());
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(frames.len() - 1);
    for pair in frames.windows(2) {
        let m = pair[0].len();
        if articulated >= m {
            return Err(CoreError::ArticulatedIndex { index: articulated, m });
        }
        let input = pair[0].with_row(articulated, pair[1].get(articulated))?.into_tensor();
        let adj = adjacency(&input)?;
        out.push(GnnSample {
            input,
            target: pair[1].tensor().clone(),
            articulated,
            adjacency: adj,
        });
    }
    Ok(out)
}

/// Mean squared one-step error over non-articulated rows of a minibatch,
/// run as one block-diagonal graph.
pub fn gnn_batch_loss<T: Real>(
    tape: &Tape<T>,
    store: &ParamStore<T>,
    dynamics: &Dynamics,
    batch: &[&GnnSample<T>],
    passes: usize,
    quasi_static: bool,
) -> Result<Var> {
    let inputs: Vec<Vec<T>> = batch.iter().flat_map(|s| rows_of(&s.input)).collect();
    let targets: Vec<Vec<T>> = batch.iter().flat_map(|s| rows_of(&s.target)).collect();
    let mut frozen = Vec::new();
    for s in batch {
        let m = s.input.shape()[0];
        frozen.extend((0..m).map(|i| i == s.articulated));
    }
    let adj = Rc::new(Adjacency::block_diag(
        &batch.iter().map(|s| s.adjacency.clone()).collect::<Vec<_>>(),
    ));
    let z0 = tape.constant(Tensor::from_rows(&inputs)?);
    let mut source = |_: usize, _: &Tensor<T>| Ok((*adj).clone());
    let (pred, _) = dynamics.propagate_var(tape, store, z0, &frozen, passes, quasi_static, &mut source)?;
    let rows: Vec<usize> = (0..frozen.len()).filter(|&i| !frozen[i]).collect();
    if rows.is_empty() {
        return Ok(tape.constant(Tensor::scalar(T::zero())));
    }
    let target_rows: Vec<Vec<T>> = rows.iter().map(|&i| targets[i].clone()).collect();
    let target = tape.constant(Tensor::from_rows(&target_rows)?);
    let diff = tape.sub(tape.gather_rows(pred, &rows)?, target)?;
    Ok(tape.mean(tape.mul(diff, diff)?))
}

fn rows_of<T: Real>(t: &Tensor<T>) -> Vec<Vec<T>> {
    (0..t.shape()[0]).map(|i| t.row(i).to_vec()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
}

/// Adam on the dynamics parameters only; returns the per-step loss.
pub fn train_gnn<T: Real, R: Rng + ?Sized>(
    dynamics: &Dynamics,
    store: &mut ParamStore<T>,
    samples: &[GnnSample<T>],
    dyn_cfg: &DynamicsConfig,
    train: &GnnTrainConfig,
    rng: &mut R,
    mut on_step: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(CoreError::Config("no GNN training samples".into()));
    }
    let params = dynamics.params();
    let mut adam = Adam::new(
        store,
        params.clone(),
        AdamConfig {
            lr: train.lr,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(train.steps);
    for step in 0..train.steps {
        let mut batch = Vec::with_capacity(train.batch_size);
        while batch.len() < train.batch_size.min(samples.len()) {
            if cursor == order.len() {
                order.shuffle(rng);
                cursor = 0;
            }
            batch.push(&samples[order[cursor]]);
            cursor += 1;
        }
        let tape = Tape::new();
        let loss = gnn_batch_loss(&tape, store, dynamics, &batch, dyn_cfg.passes, dyn_cfg.quasi_static)?;
        let value = tape.value(loss).item().to_f64().unwrap();
        store.zero_grad(&params);
        if tape.requires_grad(loss) {
            tape.backward(loss, store)?;
            adam.step(store)?;
        }
        losses.push(value);
        on_step(step, value);
    }
    Ok(losses)
}

/// One-step MSE of the model and of copying `z^t`, over non-articulated rows.
pub fn one_step_errors<T: Real>(
    dynamics: &Dynamics,
    store: &ParamStore<T>,
    samples: &[GnnSample<T>],
    dyn_cfg: &DynamicsConfig,
) -> Result<(f64, f64)> {
    let mut model = 0.0;
    let mut copy = 0.0;
    let mut n = 0usize;
    for s in samples {
        let z0 = LatentSet::from_tensor(s.input.clone())?;
        let target = LatentSet::from_tensor(s.target.clone())?;
        let m = z0.len();
        let frozen: Vec<bool> = (0..m).map(|i| i == s.articulated).collect();
        let mut source = |_: usize, _: &Tensor<T>| Ok(s.adjacency.clone());
        let (pred, _) = dynamics.propagate(store, &z0, &frozen, dyn_cfg.passes, dyn_cfg.quasi_static, &mut source)?;
        let rows: Vec<usize> = (0..m).filter(|&i| i != s.articulated).collect();
        model += pred.mse_over(&target, &rows) * rows.len() as f64;
        copy += z0.mse_over(&target, &rows) * rows.len() as f64;
        n += rows.len();
    }
    let n = n.max(1) as f64;
    Ok((model / n, copy / n))
}
