//! The full model: encoder, decoder and dynamics sharing one parameter store.

use cdyn_autodiff::{ParamId, ParamStore, Real, Tape, Var};
use rand::Rng;

use crate::config::{DynamicsConfig, ModelConfig, RenderConfig};
use crate::decoder::Decoder;
use crate::dynamics::{Dynamics, Predictor};
use crate::encoder::Encoder;
use crate::error::{CoreError, Result};
use crate::geometry::WorkspaceGrid;
use crate::image::PosedView;
use crate::render::{recon_loss_var, sample_pixels, select_training_rays, Sampling};

#[derive(Clone, Debug)]
pub struct Model<T: Real = f32> {
    pub config: ModelConfig,
    pub grid: WorkspaceGrid,
    pub store: ParamStore<T>,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub dynamics: Dynamics,
}

impl<T: Real> Model<T> {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let grid = config.grid()?;
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, &config, rng);
        let decoder = Decoder::new(&mut store, &config, rng);
        let dynamics = Dynamics::new(&mut store, "gnn", &config, rng);
        Ok(Self {
            config,
            grid,
            store,
            encoder,
            decoder,
            dynamics,
        })
    }

    /// Encoder and decoder parameters.
    pub fn ae_params(&self) -> Vec<ParamId> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    pub fn gnn_params(&self) -> Vec<ParamId> {
        self.dynamics.params()
    }

    /// Re-initializes the dynamics networks in place.
    pub fn reset_dynamics<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let mut tmp = ParamStore::<T>::new();
        let fresh = Dynamics::new(&mut tmp, "gnn", &self.config, rng);
        for (dst, src) in self.dynamics.params().into_iter().zip(fresh.params()) {
            *self.store.get_mut(dst).value_mut() = tmp.value(src).clone();
        }
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            grid: self.grid.clone(),
            store: self.store.cast(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            dynamics: self.dynamics.clone(),
        }
    }

    pub fn predictor<'a>(&'a self, config: &'a DynamicsConfig) -> Predictor<'a, T> {
        Predictor {
            encoder: &self.encoder,
            decoder: &self.decoder,
            dynamics: &self.dynamics,
            store: &self.store,
            grid: &self.grid,
            config,
        }
    }

    /// Reconstruction loss of view `target` after encoding all `views`,
    /// on at most `render.ray_budget` rays drawn from the enlarged mask.
    pub fn ae_loss_var<R: Rng + ?Sized>(
        &self,
        tape: &Tape<T>,
        views: &[PosedView],
        target: usize,
        render: &RenderConfig,
        rng: &mut R,
    ) -> Result<Var> {
        let view = views.get(target).ok_or(CoreError::NoViews)?;
        let z = self.encoder.encode_scene_var(tape, &self.store, views, &self.grid)?;
        let (w, h) = (view.camera.width, view.camera.height);
        let (candidates, _, total) = select_training_rays(&view.masks, w, h, render.dilation_px);
        let pixels = sample_pixels(&candidates, render.ray_budget, rng);
        recon_loss_var(
            tape,
            &self.store,
            &self.decoder,
            z,
            view,
            &total,
            &pixels,
            &self.grid.bounds,
            render.n_samples,
            Sampling::Stratified(rng),
        )
    }
}
