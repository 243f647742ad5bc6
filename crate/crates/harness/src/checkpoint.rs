//! Single-file binary checkpoints.
//!
//! Layout (all little-endian): the magic `CDYNCKPT`, a `u32` format version,
//! the config snapshot, the ChaCha8 RNG state, progress counters, then the
//! parameter blocks (name, shape, raw `f32` data) and the Adam states.

use std::path::Path;

use cdyn_autodiff::{Adam, AdamConfig, ParamStore, Tensor};
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::binio::{Reader, Writer};
use crate::error::{HarnessError, Result};

pub const MAGIC: &[u8; 8] = b"CDYNCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Progress {
    pub ae_steps: u64,
    pub gnn_steps: u64,
}

/// Adam moments keyed by parameter name rather than store index.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub name: String,
    pub config: AdamConfig,
    pub step: u64,
    pub params: Vec<String>,
    pub first: Vec<Vec<f32>>,
    pub second: Vec<Vec<f32>>,
}

impl OptimizerState {
    pub fn capture(name: &str, adam: &Adam<f32>, store: &ParamStore<f32>) -> Self {
        Self {
            name: name.into(),
            config: adam.config,
            step: adam.step,
            params: adam.params.iter().map(|&p| store.get(p).name.clone()).collect(),
            first: adam.first.clone(),
            second: adam.second.clone(),
        }
    }

    pub fn restore(&self, store: &ParamStore<f32>) -> Result<Adam<f32>> {
        let mut params = Vec::with_capacity(self.params.len());
        for (i, name) in self.params.iter().enumerate() {
            let id = store
                .lookup(name)
                .ok_or_else(|| HarnessError::format("optimizer state", format!("unknown parameter {name}")))?;
            let n = store.value(id).numel();
            if self.first[i].len() != n || self.second[i].len() != n {
                return Err(HarnessError::format("optimizer state", format!("moment size mismatch for {name}")));
            }
            params.push(id);
        }
        Ok(Adam {
            config: self.config,
            params,
            step: self.step,
            first: self.first.clone(),
            second: self.second.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// [`crate::HarnessConfig::to_text`] of the run that wrote it.
    pub config: String,
    pub rng: RngState,
    pub progress: Progress,
    pub params: Vec<(String, Tensor<f32>)>,
    pub optimizers: Vec<OptimizerState>,
}

impl Checkpoint {
    pub fn new(config: String, rng: &ChaCha8Rng, progress: Progress, store: &ParamStore<f32>) -> Self {
        Self {
            config,
            rng: RngState::capture(rng),
            progress,
            params: store.iter().map(|(_, p)| (p.name.clone(), p.value().clone())).collect(),
            optimizers: Vec::new(),
        }
    }

    pub fn optimizer(&self, name: &str) -> Option<&OptimizerState> {
        self.optimizers.iter().find(|o| o.name == name)
    }

    /// Copies every stored block into `store`. Names and shapes must match
    /// one to one.
    pub fn load_params(&self, store: &mut ParamStore<f32>) -> Result<()> {
        if self.params.len() != store.len() {
            return Err(HarnessError::format(
                "checkpoint",
                format!("{} parameter blocks, model has {}", self.params.len(), store.len()),
            ));
        }
        for (name, value) in &self.params {
            let id = store
                .lookup(name)
                .ok_or_else(|| HarnessError::format("checkpoint", format!("model has no parameter {name}")))?;
            let slot = store.get_mut(id).value_mut();
            if slot.shape() != value.shape() {
                return Err(HarnessError::format(
                    "checkpoint",
                    format!("{name}: stored shape {:?}, model shape {:?}", value.shape(), slot.shape()),
                ));
            }
            slot.data_mut().copy_from_slice(value.data());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.str(&self.config);
        w.bytes(&self.rng.seed);
        w.u64(self.rng.stream);
        w.u128(self.rng.word_pos);
        w.u64(self.progress.ae_steps);
        w.u64(self.progress.gnn_steps);
        w.len(self.params.len());
        for (name, t) in &self.params {
            w.str(name);
            w.shape(t.shape());
            w.f32s(t.data());
        }
        w.len(self.optimizers.len());
        for o in &self.optimizers {
            w.str(&o.name);
            for v in [o.config.lr, o.config.beta1, o.config.beta2, o.config.eps] {
                w.f64(v);
            }
            w.u64(o.step);
            w.len(o.params.len());
            for i in 0..o.params.len() {
                w.str(&o.params[i]);
                w.f32s(&o.first[i]);
                w.f32s(&o.second[i]);
            }
        }
        w.buf
    }

    /// `path` only labels errors.
    pub fn from_bytes(data: &[u8], path: &str) -> Result<Self> {
        if data.len() < 12 || &data[..8] != MAGIC {
            return Err(HarnessError::Magic { path: path.into() });
        }
        let mut r = Reader::new(data, "checkpoint");
        r.bytes(8)?;
        let found = r.u32()?;
        if found != VERSION {
            return Err(HarnessError::Version {
                path: path.into(),
                found,
                expected: VERSION,
            });
        }
        let config = r.str()?;
        let rng = RngState {
            seed: r.array()?,
            stream: r.u64()?,
            word_pos: r.u128()?,
        };
        let progress = Progress {
            ae_steps: r.u64()?,
            gnn_steps: r.u64()?,
        };
        let n = r.len(1)?;
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.str()?;
            let shape = r.shape()?;
            let data = r.f32s()?;
            let t = Tensor::new(&shape, data).map_err(|e| r.err(format!("{name}: {e}")))?;
            params.push((name, t));
        }
        let n = r.len(1)?;
        let mut optimizers = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.str()?;
            let config = AdamConfig {
                lr: r.f64()?,
                beta1: r.f64()?,
                beta2: r.f64()?,
                eps: r.f64()?,
            };
            let step = r.u64()?;
            let k = r.len(1)?;
            let mut o = OptimizerState {
                name,
                config,
                step,
                params: Vec::with_capacity(k),
                first: Vec::with_capacity(k),
                second: Vec::with_capacity(k),
            };
            for _ in 0..k {
                o.params.push(r.str()?);
                o.first.push(r.f32s()?);
                o.second.push(r.f32s()?);
            }
            optimizers.push(o);
        }
        r.finish()?;
        Ok(Self {
            config,
            rng,
            progress,
            params,
            optimizers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        }
        // write-then-rename so an interrupted save never clobbers the last good file
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(HarnessError::io(&tmp))?;
        std::fs::rename(&tmp, path).map_err(HarnessError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(HarnessError::io(path))?;
        Self::from_bytes(&data, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdyn_autodiff::Tape;
    use rand::Rng;

    fn sample() -> (Checkpoint, ParamStore<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let a = store.add("a.weight", Tensor::new(&[2, 3], (0..6).map(|_| rng.gen()).collect()).unwrap());
        store.add("b.bias", Tensor::new(&[4], vec![f32::MIN_POSITIVE, -0.0, 1e-40, 7.5]).unwrap());
        let mut adam = Adam::new(&store, vec![a], AdamConfig::default());
        let tape = Tape::new();
        let v = tape.param(&store, a);
        let loss = tape.sum(tape.mul(v, v).unwrap());
        tape.backward(loss, &mut store).unwrap();
        adam.step(&mut store).unwrap();
        rng.gen::<u64>();
        let mut ck = Checkpoint::new("ae_lr = 0.1\n".into(), &rng, Progress { ae_steps: 9, gnn_steps: 0 }, &store);
        ck.optimizers.push(OptimizerState::capture("ae", &adam, &store));
        (ck, store)
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let (ck, store) = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, "x").unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back, ck);
        assert_eq!(back.optimizer("ae").unwrap().restore(&store).unwrap().step, 1);
        let mut fresh = store.clone();
        for id in fresh.ids().collect::<Vec<_>>() {
            fresh.get_mut(id).value_mut().data_mut().fill(0.0);
        }
        back.load_params(&mut fresh).unwrap();
        for (id, p) in store.iter() {
            let bits = |t: &Tensor<f32>| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(p.value()), bits(fresh.value(id)));
        }
    }

    #[test]
    fn rng_state_resumes_the_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        rng.gen::<[u64; 5]>();
        let mut restored = RngState::capture(&rng).restore();
        assert_eq!(rng.gen::<[u64; 4]>(), restored.gen::<[u64; 4]>());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let (ck, mut store) = sample();
        let mut bytes = ck.to_bytes();
        bytes[8] = 2;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes, "x"),
            Err(HarnessError::Version { found: 2, expected: 1, .. })
        ));
        assert!(matches!(Checkpoint::from_bytes(b"PNG.....1234", "x"), Err(HarnessError::Magic { .. })));
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3], "x").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, "x").is_err());
        let mut other = ck.clone();
        other.params[0].1 = Tensor::zeros(&[3, 2]).unwrap();
        assert!(other.load_params(&mut store).is_err());
    }
}
