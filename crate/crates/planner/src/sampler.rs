//! Goal-biased sampling of centre-of-mass configurations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::goal::{unfinished, Footprint, GoalSpec, Point, Summary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Probability of pulling one unfinished object into its region.
    pub p_goal: f64,
    /// Probability of placing the pusher next to an object.
    pub p_contact: f64,
    /// Pusher-to-object distance for contact targets (m).
    pub contact_distance: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            p_goal: 0.3,
            p_contact: 0.4,
            contact_distance: 0.05,
        }
    }
}

/// Planar targets for every object.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetSample {
    pub g: Vec<Point>,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, fp: &Footprint) -> Point {
    [rng.gen_range(fp.min[0]..=fp.max[0]), rng.gen_range(fp.min[1]..=fp.max[1])]
}

/// Draws a target from the mixture: goal-directed, pusher-contact, or
/// uniform over the footprint. Components are clamped to the footprint.
pub fn sample_target<R: Rng + ?Sized>(
    rng: &mut R,
    summary: &Summary,
    goal: &GoalSpec,
    articulated: usize,
    footprint: &Footprint,
    cfg: &SamplerConfig,
) -> TargetSample {
    let current = summary.com_or(footprint.center());
    let m = current.len();
    let u: f64 = rng.gen();
    let open = unfinished(summary, goal, articulated);
    let others: Vec<usize> = (0..m).filter(|&j| j != articulated).collect();
    let g = if u < cfg.p_goal && !open.is_empty() {
        let (r, j) = open[rng.gen_range(0..open.len())];
        let region = &goal.regions[r];
        let mut g = current;
        g[j] = [
            rng.gen_range(region.min[0]..=region.max[0]),
            rng.gen_range(region.min[1]..=region.max[1]),
        ];
        g
    } else if u < cfg.p_goal + cfg.p_contact && !others.is_empty() && articulated < m {
        let j = others[rng.gen_range(0..others.len())];
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut g = current.clone();
        g[articulated] = [
            current[j][0] + cfg.contact_distance * angle.cos(),
            current[j][1] + cfg.contact_distance * angle.sin(),
        ];
        g
    } else {
        (0..m).map(|_| uniform(rng, footprint)).collect()
    };
    TargetSample {
        g: g.into_iter().map(|p| footprint.clamp(p)).collect(),
    }
}
