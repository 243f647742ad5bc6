//! Latent-space RRT.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::goal::{goal_cost, residual, GoalSpec, Point};
use crate::sampler::{sample_target, SamplerConfig};
use crate::tree::Tree;
use crate::world::{Action, WorldModel};

/// How the node to expand is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Nearest node to a goal-biased target sample.
    GoalBiased,
    /// Uniformly random node (control-tree ablation).
    UniformNode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RrtConfig {
    /// Maximum number of samples.
    pub budget: usize,
    /// Pusher step length (m).
    pub step: f64,
    pub selection: Selection,
    pub sampler: SamplerConfig,
}

impl Default for RrtConfig {
    fn default() -> Self {
        Self {
            budget: 100_000,
            step: 0.02,
            selection: Selection::GoalBiased,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlanResult<S> {
    /// Root-to-goal actions, or `None` if the budget ran out.
    pub actions: Option<Vec<Action>>,
    /// Samples drawn until success or exhaustion.
    pub samples: usize,
    pub best_cost: usize,
    /// Node reaching the goal, or the lowest-cost node on failure.
    pub best_node: usize,
    pub tree: Tree<S>,
}

impl<S> PlanResult<S> {
    pub fn solved(&self) -> bool {
        self.actions.is_some()
    }

    /// Planned COM trajectory along the best node's path.
    pub fn com_path(&self) -> Vec<Vec<Point>> {
        self.tree
            .path(self.best_node)
            .iter()
            .map(|&i| self.tree.node(i).com.clone())
            .collect()
    }
}

/// Random pusher action of length `step` and uniform direction.
pub fn random_action<R: Rng + ?Sized>(rng: &mut R, step: f64) -> Action {
    let a = rng.gen_range(0.0..std::f64::consts::TAU);
    [step * a.cos(), step * a.sin()]
}

/// Grows a tree from `root` until a node reaches goal cost 0 or the sample
/// budget is spent.
pub fn rrt_plan<W: WorldModel, R: Rng + ?Sized>(
    world: &W,
    root: W::State,
    goal: &GoalSpec,
    cfg: &RrtConfig,
    rng: &mut R,
) -> Result<PlanResult<W::State>> {
    let a = world.articulated();
    let fp = world.footprint();
    let fallback = fp.center();
    let summary = world.summarize(&root)?;
    let root_cost = goal_cost(&summary, goal, a);
    let mut tree = Tree::new(root, summary.com_or(fallback), root_cost);
    // targets are drawn around the node closest to the goal so far
    let mut best = (root_cost, residual(&summary, goal, a), 0);
    let mut anchor = summary;
    if root_cost == 0 {
        return Ok(PlanResult {
            actions: Some(Vec::new()),
            samples: 0,
            best_cost: 0,
            best_node: 0,
            tree,
        });
    }
    for sample in 1..=cfg.budget {
        let from = match cfg.selection {
            Selection::GoalBiased => {
                let g = sample_target(rng, &anchor, goal, a, &fp, &cfg.sampler);
                tree.nearest(&g.g)
            }
            Selection::UniformNode => rng.gen_range(0..tree.len()),
        };
        let action = random_action(rng, cfg.step);
        let Some(next) = world.step(&tree.node(from).state, action)? else {
            continue;
        };
        let s = world.summarize(&next)?;
        let cost = goal_cost(&s, goal, a);
        let i = tree.insert(from, action, next, s.com_or(fallback), cost);
        let res = residual(&s, goal, a);
        if (cost, res) < (best.0, best.1) {
            best = (cost, res, i);
            anchor = s;
        }
        if cost == 0 {
            log::debug!("solved after {sample} samples, depth {}", tree.node(i).depth);
            return Ok(PlanResult {
                actions: Some(tree.actions_to(i)),
                samples: sample,
                best_cost: 0,
                best_node: i,
                tree,
            });
        }
    }
    Ok(PlanResult {
        actions: None,
        samples: cfg.budget,
        best_cost: best.0,
        best_node: best.2,
        tree,
    })
}
