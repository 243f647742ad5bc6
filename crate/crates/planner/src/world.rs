//! The planner's view of the world: a state type, a one-step model and a
//! summary of each state.

use cdyn_core::decoder::ObjectGeometry;
use cdyn_core::{LatentSet, PosedView, Predictor, RigidTransform};

use crate::error::Result;
use crate::goal::{Footprint, Summary};

/// A planar pusher displacement (m).
pub type Action = [f64; 2];

pub trait WorldModel {
    type State: Clone;

    fn articulated(&self) -> usize;

    /// Extent in which centres of mass and targets live.
    fn footprint(&self) -> Footprint;

    fn summarize(&self, state: &Self::State) -> Result<Summary>;

    /// Successor under `action`, or `None` if the action is not admissible
    /// from `state`.
    fn step(&self, state: &Self::State, action: Action) -> Result<Option<Self::State>>;
}

/// Learned latent state: the object latents and the pusher transform
/// accumulated since the observation the rollout started from.
#[derive(Clone, Debug)]
pub struct LatentState {
    pub z: LatentSet<f32>,
    pub pusher: RigidTransform,
    pub offset: Action,
}

/// World model backed by the trained encoder, decoder and GNN.
///
/// Interventions re-encode the pusher from `views` through the accumulated
/// transform; the state only ever sees model outputs.
pub struct LearnedWorld<'a> {
    pub predictor: Predictor<'a, f32>,
    pub views: Vec<PosedView>,
    pub articulated: usize,
}

impl<'a> LearnedWorld<'a> {
    pub fn new(predictor: Predictor<'a, f32>, views: Vec<PosedView>, articulated: usize) -> Self {
        Self {
            predictor,
            views,
            articulated,
        }
    }

    /// Encodes the bound observation.
    pub fn initial_state(&self) -> Result<LatentState> {
        let p = &self.predictor;
        Ok(LatentState {
            z: p.encoder.encode_scene(p.store, &self.views, p.grid)?,
            pusher: RigidTransform::identity(),
            offset: [0.0, 0.0],
        })
    }
}

impl WorldModel for LearnedWorld<'_> {
    type State = LatentState;

    fn articulated(&self) -> usize {
        self.articulated
    }

    fn footprint(&self) -> Footprint {
        Footprint::of_grid(self.predictor.grid)
    }

    fn summarize(&self, state: &LatentState) -> Result<Summary> {
        let p = &self.predictor;
        let g = ObjectGeometry::decode(p.decoder, p.store, p.grid, &state.z, p.config.kappa)?;
        Ok(Summary::from_geometry(&g))
    }

    fn step(&self, state: &LatentState, action: Action) -> Result<Option<LatentState>> {
        let offset = [state.offset[0] + action[0], state.offset[1] + action[1]];
        let pusher = state.pusher.then(&RigidTransform::planar(action[0], action[1], 0.0));
        let za = self.predictor.intervene(&self.views, self.articulated, &pusher)?;
        let z0 = state.z.with_row(self.articulated, &za)?;
        let (z, _) = self.predictor.step(&z0, self.articulated)?;
        Ok(Some(LatentState { z, pusher, offset }))
    }
}
