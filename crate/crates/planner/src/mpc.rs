//! Closed-loop plan execution with replanning.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::goal::{goal_cost, GoalSpec, Point};
use crate::rrt::{random_action, rrt_plan, PlanResult, RrtConfig};
use crate::world::{Action, WorldModel};

/// Something that can be observed and acted on, e.g. a simulator whose
/// observations are encoded into world-model states.
pub trait Environment<S> {
    fn observe(&mut self) -> Result<S>;
    fn apply(&mut self, action: Action) -> Result<()>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub candidates: usize,
    pub horizon: usize,
    /// COM deviation from the plan that triggers replanning (m).
    pub replan_threshold: f64,
    /// Executed-step limit as a multiple of the initial plan length.
    pub step_limit_factor: usize,
    pub rrt: RrtConfig,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            candidates: 32,
            horizon: 5,
            replan_threshold: 0.04,
            step_limit_factor: 3,
            rrt: RrtConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MpcLog {
    pub planned_steps: usize,
    pub executed: Vec<Action>,
    /// Goal cost of every observation, including the last.
    pub costs: Vec<usize>,
    /// COM deviation from the plan at each control cycle.
    pub deviations: Vec<f64>,
    pub replans: usize,
    pub success: bool,
    pub abort_reason: Option<String>,
}

fn deviation(a: &[Point], b: &[Point]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Summed deviation of a candidate rollout from the plan, or infinity if
/// the world model rejects one of its actions.
fn candidate_deviation<W: WorldModel>(
    world: &W,
    start: &W::State,
    actions: &[Action],
    path: &[Vec<Point>],
) -> Result<f64> {
    let fallback = world.footprint().center();
    let mut s = start.clone();
    let mut total = 0.0;
    for (h, &a) in actions.iter().enumerate() {
        match world.step(&s, a)? {
            Some(next) => s = next,
            None => return Ok(f64::INFINITY),
        }
        total += deviation(&world.summarize(&s)?.com_or(fallback), &path[h + 1]);
    }
    Ok(total)
}

/// Executes `plan` in `env`. Each cycle observes the environment, compares
/// its centres of mass with the plan, replans when they drift apart, and
/// applies the first action of the candidate sequence that best follows the
/// planned COM trajectory.
pub fn mpc_execute<W: WorldModel, E: Environment<W::State>, R: Rng + ?Sized>(
    world: &W,
    env: &mut E,
    goal: &GoalSpec,
    plan: &PlanResult<W::State>,
    cfg: &MpcConfig,
    rng: &mut R,
) -> Result<MpcLog> {
    let a = world.articulated();
    let fallback = world.footprint().center();
    let mut actions = plan.actions.clone().unwrap_or_default();
    let mut path = plan.com_path();
    let mut k = 0;
    let mut log = MpcLog {
        planned_steps: actions.len(),
        ..MpcLog::default()
    };
    let limit = cfg.step_limit_factor * actions.len().max(1);
    loop {
        let s = env.observe()?;
        let summary = world.summarize(&s)?;
        let cost = goal_cost(&summary, goal, a);
        log.costs.push(cost);
        if cost == 0 {
            log.success = true;
            break;
        }
        if log.executed.len() >= limit {
            log.abort_reason = Some(format!("step limit {limit} reached"));
            break;
        }
        let com = summary.com_or(fallback);
        let dev = path.get(k).map_or(f64::INFINITY, |p| deviation(&com, p));
        log.deviations.push(dev);
        if dev >= cfg.replan_threshold || k >= actions.len() {
            log.replans += 1;
            let r = rrt_plan(world, s.clone(), goal, &cfg.rrt, rng)?;
            match r.actions {
                Some(ref new) if !new.is_empty() => {
                    path = r.com_path();
                    actions = new.clone();
                    k = 0;
                }
                _ => {
                    log.abort_reason = Some(format!("replanning failed, best cost {}", r.best_cost));
                    break;
                }
            }
        }
        let h = cfg.horizon.max(1).min(actions.len() - k);
        let mut best = (f64::INFINITY, actions[k]);
        for c in 0..cfg.candidates.max(1) {
            let seq: Vec<Action> = if c == 0 {
                actions[k..k + h].to_vec()
            } else {
                (0..h).map(|_| random_action(rng, cfg.rrt.step)).collect()
            };
            let d = candidate_deviation(world, &s, &seq, &path[k..])?;
            if d < best.0 {
                best = (d, seq[0]);
            }
        }
        env.apply(best.1)?;
        log.executed.push(best.1);
        k += 1;
    }
    Ok(log)
}
