//! Ground-truth world model and environment for the planning tier.
//!
//! [`OracleWorld`] steps the push simulator directly and perceives centres
//! of mass and colours from the true poses, so planner behaviour can be
//! checked independently of model quality.

use cdyn_planner::goal::Point;
use cdyn_planner::{Action, Environment, Footprint, GoalRegion, GoalSpec, PlanError, Summary, WorldModel};
use cdyn_scene::{sample_scene, step_push_oracle, ForgeConfig, SceneState};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::error::{HarnessError, Result};

/// Heading error applied to every executed action, uniform in ±this (rad).
pub const ACTUATION_NOISE: f64 = 0.2;

pub struct OracleWorld {
    pub forge: ForgeConfig,
    pub articulated: usize,
}

pub fn summarize_state(state: &SceneState) -> Summary {
    Summary {
        com: state.objects.iter().map(|o| Some([o.pose.x, o.pose.y])).collect(),
        color: state.objects.iter().map(|o| Some(o.color)).collect(),
    }
}

impl WorldModel for OracleWorld {
    type State = SceneState;

    fn articulated(&self) -> usize {
        self.articulated
    }

    fn footprint(&self) -> Footprint {
        Footprint {
            min: self.forge.workspace_min,
            max: self.forge.workspace_max,
        }
    }

    fn summarize(&self, state: &SceneState) -> cdyn_planner::Result<Summary> {
        Ok(summarize_state(state))
    }

    /// Pushes that would drive something into the workspace boundary are
    /// not admissible.
    fn step(&self, state: &SceneState, action: Action) -> cdyn_planner::Result<Option<SceneState>> {
        let out = step_push_oracle(state, action, &self.forge);
        Ok(out.clamped.is_empty().then_some(out.state))
    }
}

/// The simulator as an execution environment, with noisy actuation.
pub struct OracleEnv {
    pub state: SceneState,
    pub forge: ForgeConfig,
    pub rng: ChaCha8Rng,
    pub noise: f64,
}

impl OracleEnv {
    pub fn new(state: SceneState, forge: ForgeConfig, seed: u64) -> Self {
        Self {
            state,
            forge,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise: ACTUATION_NOISE,
        }
    }
}

impl Environment<SceneState> for OracleEnv {
    fn observe(&mut self) -> cdyn_planner::Result<SceneState> {
        Ok(self.state.clone())
    }

    fn apply(&mut self, action: Action) -> cdyn_planner::Result<()> {
        let e = if self.noise > 0.0 {
            self.rng.gen_range(-self.noise..=self.noise)
        } else {
            0.0
        };
        let (s, c) = e.sin_cos();
        let noisy = [c * action[0] - s * action[1], s * action[0] + c * action[1]];
        self.state = step_push_oracle(&self.state, noisy, &self.forge).state;
        Ok(())
    }
}

/// One box plus the pusher, and an 8 cm goal square in the box's colour
/// whose centre is 8 to 15 cm from the box.
#[derive(Clone, Debug)]
pub struct PushTask {
    pub scene: SceneState,
    pub goal: GoalSpec,
}

pub const GOAL_SIDE: f64 = 0.08;
/// Goal centres keep this distance from the workspace edge, so a box
/// centred in the goal still fits on the table.
pub const GOAL_MARGIN: f64 = 0.05;

pub fn one_object_task(seed: u64, forge: &ForgeConfig) -> Result<PushTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = sample_scene(&mut rng, 1, forge)?;
    let obj = &scene.objects[0];
    let (lo, hi) = (forge.workspace_min, forge.workspace_max);
    for _ in 0..1000 {
        let r = rng.gen_range(0.08..0.15);
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        let c: Point = [obj.pose.x + r * th.cos(), obj.pose.y + r * th.sin()];
        if (0..2).all(|a| c[a] >= lo[a] + GOAL_MARGIN && c[a] <= hi[a] - GOAL_MARGIN) {
            let h = GOAL_SIDE / 2.0;
            return Ok(PushTask {
                goal: GoalSpec {
                    regions: vec![GoalRegion {
                        min: [c[0] - h, c[1] - h],
                        max: [c[0] + h, c[1] + h],
                        color: obj.color,
                    }],
                },
                scene,
            });
        }
    }
    Err(HarnessError::Plan(PlanError::Config(format!(
        "no goal placement found for task seed {seed}"
    ))))
}
