//! Planning in the space of predicted object configurations.
//!
//! An RRT grows a tree of world-model states by applying random pusher
//! actions to nodes chosen nearest (in centre-of-mass space) to goal-biased
//! target samples. A receding-horizon loop executes the resulting plan and
//! replans when the observed configuration drifts away from it.
//!
//! The planner sees the world only through [`WorldModel`]: a state type,
//! a one-step predictor and a per-state summary of object centres of mass
//! and colours.

pub mod error;
pub mod goal;
pub mod mpc;
pub mod rrt;
pub mod sampler;
pub mod tree;
pub mod world;

pub use error::{PlanError, Result};
pub use goal::{goal_cost, Footprint, GoalRegion, GoalSpec, Summary};
pub use mpc::{mpc_execute, Environment, MpcConfig, MpcLog};
pub use rrt::{rrt_plan, PlanResult, RrtConfig, Selection};
pub use sampler::{sample_target, SamplerConfig, TargetSample};
pub use tree::{PlanNode, Tree};
pub use world::{Action, LatentState, LearnedWorld, WorldModel};
