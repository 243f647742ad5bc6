use cdyn_core::decoder::Occupancy;
use cdyn_core::{Aabb, Vec3, WorkspaceGrid};
use cdyn_planner::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const BLUE: [f64; 3] = [0.15, 0.3, 0.9];
const YELLOW: [f64; 3] = [0.95, 0.85, 0.1];
const RED: [f64; 3] = [0.9, 0.1, 0.1];

fn footprint() -> Footprint {
    Footprint {
        min: [-0.2, -0.2],
        max: [0.2, 0.2],
    }
}

/// Discs on a table; the last one is a kinematic pusher that shoves the
/// others out along the line of centres.
struct Discs {
    radii: Vec<f64>,
    colors: Vec<[f64; 3]>,
}

impl WorldModel for Discs {
    type State = Vec<[f64; 2]>;

    fn articulated(&self) -> usize {
        self.radii.len() - 1
    }

    fn footprint(&self) -> Footprint {
        footprint()
    }

    fn summarize(&self, s: &Self::State) -> Result<Summary> {
        Ok(Summary {
            com: s.iter().map(|&p| Some(p)).collect(),
            color: self.colors.iter().map(|&c| Some(c)).collect(),
        })
    }

    fn step(&self, s: &Self::State, a: Action) -> Result<Option<Self::State>> {
        let p = self.articulated();
        let mut s = s.clone();
        s[p] = [s[p][0] + a[0], s[p][1] + a[1]];
        let fp = footprint();
        let r = self.radii[p];
        if s[p][0] - r < fp.min[0] || s[p][0] + r > fp.max[0] || s[p][1] - r < fp.min[1] || s[p][1] + r > fp.max[1] {
            return Ok(None);
        }
        for _ in 0..10 {
            let mut any = false;
            for i in 0..s.len() {
                for j in 0..s.len() {
                    if i == j || j == p {
                        continue;
                    }
                    let d = [s[j][0] - s[i][0], s[j][1] - s[i][1]];
                    let n = d[0].hypot(d[1]).max(1e-12);
                    let depth = self.radii[i] + self.radii[j] - n;
                    if depth > 1e-12 {
                        s[j] = [s[j][0] + d[0] / n * depth, s[j][1] + d[1] / n * depth];
                        any = true;
                    }
                }
            }
            if !any {
                break;
            }
        }
        Ok(Some(s))
    }
}

fn one_box_world() -> Discs {
    Discs {
        radii: vec![0.03, 0.02],
        colors: vec![BLUE, RED],
    }
}

fn region(cx: f64, cy: f64, half: f64, color: [f64; 3]) -> GoalRegion {
    GoalRegion {
        min: [cx - half, cy - half],
        max: [cx + half, cy + half],
        color,
    }
}

fn one_box_task(seed: u64) -> (Vec<[f64; 2]>, GoalSpec) {
    let mut r = rng(seed);
    let b = [r.gen_range(-0.08..0.08), r.gen_range(-0.08..0.08)];
    let ang = r.gen_range(0.0..std::f64::consts::TAU);
    let pusher = [b[0] + 0.09 * ang.cos(), b[1] + 0.09 * ang.sin()];
    let gang = r.gen_range(0.0..std::f64::consts::TAU);
    let g = region(b[0] + 0.1 * gang.cos(), b[1] + 0.1 * gang.sin(), 0.03, BLUE);
    (vec![b, pusher], GoalSpec { regions: vec![g] })
}

fn grid() -> WorkspaceGrid {
    WorkspaceGrid::new(Aabb::new(Vec3::new(-0.2, -0.2, 0.0), Vec3::new(0.2, 0.2, 0.1)), [2, 8, 8]).unwrap()
}

fn block(lo: [usize; 2], hi: [usize; 2]) -> Occupancy {
    let mut data = vec![false; 2 * 8 * 8];
    for y in lo[1]..hi[1] {
        for x in lo[0]..hi[0] {
            data[y * 8 + x] = true;
        }
    }
    Occupancy::new([2, 8, 8], data)
}

#[test]
fn goal_cost_on_occupancy_fixtures() {
    let g = grid();
    // voxels are 5 cm wide; block [0,2)x[0,2) has its COM at (-0.15, -0.15)
    let occ = vec![block([0, 0], [2, 2]), block([6, 6], [8, 8]), block([3, 3], [5, 5])];
    let s = Summary::from_occupancies(&occ, &[BLUE, YELLOW, RED], &g);
    let c = s.com[0].unwrap();
    assert!((c[0] + 0.15).abs() < 1e-12 && (c[1] + 0.15).abs() < 1e-12);
    let both_in = GoalSpec {
        regions: vec![region(-0.15, -0.15, 0.02, BLUE), region(0.15, 0.15, 0.02, YELLOW)],
    };
    assert_eq!(goal_cost(&s, &both_in, 2), 0);
    let one_out = GoalSpec {
        regions: vec![region(-0.15, -0.15, 0.02, BLUE), region(-0.1, 0.1, 0.05, YELLOW)],
    };
    assert_eq!(goal_cost(&s, &one_out, 2), 1);
    assert_eq!(goal_cost(&s, &GoalSpec::default(), 2), 0);

    // the blue object vanishes: its region cannot be satisfied
    let empty = Occupancy::new([2, 8, 8], vec![false; 128]);
    let gone = Summary::from_occupancies(&[empty, occ[1].clone(), occ[2].clone()], &[BLUE, YELLOW, RED], &g);
    assert_eq!(goal_cost(&gone, &both_in, 2), 1);
    // the pusher is never assigned to a region, even one keyed on red
    let red_goal = GoalSpec {
        regions: vec![region(0.0, 0.0, 0.1, RED)],
    };
    assert_eq!(goal_cost(&s, &red_goal, 2), 1);
}

#[test]
fn goal_directed_targets_land_in_the_region() {
    let world = one_box_world();
    let (s, goal) = one_box_task(1);
    let summary = world.summarize(&s).unwrap();
    let cfg = SamplerConfig {
        p_goal: 1.0,
        p_contact: 0.0,
        ..SamplerConfig::default()
    };
    let mut r = rng(2);
    for _ in 0..200 {
        let t = sample_target(&mut r, &summary, &goal, 1, &footprint(), &cfg);
        assert!(goal.regions[0].contains(&t.g[0]));
        assert_eq!(t.g[1], s[1]);
    }
}

#[test]
fn uniform_targets_are_centred() {
    let world = one_box_world();
    let (s, goal) = one_box_task(3);
    let summary = world.summarize(&s).unwrap();
    let cfg = SamplerConfig {
        p_goal: 0.0,
        p_contact: 0.0,
        ..SamplerConfig::default()
    };
    let mut r = rng(4);
    let n = 10_000;
    let mut mean = [0.0; 2];
    for _ in 0..n {
        let t = sample_target(&mut r, &summary, &goal, 1, &footprint(), &cfg);
        for p in &t.g {
            mean[0] += p[0] / (2 * n) as f64;
            mean[1] += p[1] / (2 * n) as f64;
        }
    }
    // within 5% of the 40 cm footprint extent
    assert!(mean[0].abs() <= 0.02 && mean[1].abs() <= 0.02, "{mean:?}");
}

#[test]
fn nearest_node_basics() {
    let mut t = Tree::new((), vec![[0.0, 0.0]], 1);
    assert_eq!(t.nearest(&[[0.5, 0.5]]), 0);
    let mut t2 = Tree::new((), vec![[0.1, 0.0]], 1);
    t2.insert(0, [0.0, 0.0], (), vec![[0.3, 0.0]], 1);
    assert_eq!(t2.nearest(&[[0.0, 0.0]]), 0);
    // ties go to the earliest node
    t.insert(0, [0.0, 0.0], (), vec![[0.0, 0.0]], 1);
    assert_eq!(t.nearest(&[[0.2, 0.0]]), 0);
}

#[test]
fn nearest_node_matches_linear_scan() {
    let mut r = rng(5);
    for _ in 0..20 {
        let m = r.gen_range(1..5);
        let point = |r: &mut ChaCha8Rng| -> Vec<[f64; 2]> {
            (0..m).map(|_| [r.gen_range(-0.2..0.2), r.gen_range(-0.2..0.2)]).collect()
        };
        let mut t = Tree::new((), point(&mut r), 1);
        for _ in 1..100 {
            let parent = r.gen_range(0..t.len());
            let com = point(&mut r);
            t.insert(parent, [0.0, 0.0], (), com, 1);
        }
        for _ in 0..20 {
            let g = point(&mut r);
            let dist = |c: &[[f64; 2]]| -> f64 {
                c.iter().zip(&g).map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]).powi(2)).sum::<f64>().sqrt()
            };
            let mut all: Vec<(f64, usize)> = t.nodes().iter().enumerate().map(|(i, n)| (dist(&n.com), i)).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(t.nearest(&g), all[0].1);
        }
    }
}

#[test]
fn start_at_goal_gives_empty_plan() {
    let world = one_box_world();
    let s = vec![[0.0, 0.0], [0.1, 0.1]];
    let goal = GoalSpec {
        regions: vec![region(0.0, 0.0, 0.03, BLUE)],
    };
    let r = rrt_plan(&world, s, &goal, &RrtConfig::default(), &mut rng(0)).unwrap();
    assert_eq!(r.actions, Some(vec![]));
    assert_eq!(r.samples, 0);
}

fn replay(world: &Discs, s: &[[f64; 2]], actions: &[Action]) -> Vec<[f64; 2]> {
    actions
        .iter()
        .fold(s.to_vec(), |st, &a| world.step(&st, a).unwrap().unwrap())
}

#[test]
fn plans_are_valid_and_deterministic() {
    let world = one_box_world();
    for seed in 0..5 {
        let (s, goal) = one_box_task(seed);
        let cfg = RrtConfig::default();
        let a = rrt_plan(&world, s.clone(), &goal, &cfg, &mut rng(100 + seed)).unwrap();
        let b = rrt_plan(&world, s.clone(), &goal, &cfg, &mut rng(100 + seed)).unwrap();
        let actions = a.actions.clone().expect("solved");
        assert_eq!(Some(actions.clone()), b.actions);
        assert_eq!((a.samples, a.tree.len()), (b.samples, b.tree.len()));
        for (i, n) in a.tree.nodes().iter().enumerate() {
            assert!(n.parent.map_or(i == 0, |p| p < i));
        }
        let end = replay(&world, &s, &actions);
        assert_eq!(goal_cost(&world.summarize(&end).unwrap(), &goal, 1), 0);
        assert!(actions.iter().all(|a| (a[0].hypot(a[1]) - 0.02).abs() < 1e-12));
    }
}

#[test]
fn goal_bias_beats_the_control_tree() {
    let world = one_box_world();
    let mut biased = Vec::new();
    let mut control = Vec::new();
    for seed in 0..7 {
        let (s, goal) = one_box_task(seed);
        let mut cfg = RrtConfig {
            budget: 20_000,
            ..RrtConfig::default()
        };
        biased.push(rrt_plan(&world, s.clone(), &goal, &cfg, &mut rng(seed)).unwrap().samples);
        cfg.selection = Selection::UniformNode;
        control.push(rrt_plan(&world, s, &goal, &cfg, &mut rng(seed)).unwrap().samples);
    }
    biased.sort();
    control.sort();
    assert!(biased[3] < control[3], "{biased:?} vs {control:?}");
}

/// The world model itself as the environment.
struct Replay<'a> {
    world: &'a Discs,
    state: Vec<[f64; 2]>,
}

impl Environment<Vec<[f64; 2]>> for Replay<'_> {
    fn observe(&mut self) -> Result<Vec<[f64; 2]>> {
        Ok(self.state.clone())
    }

    fn apply(&mut self, a: Action) -> Result<()> {
        if let Some(next) = self.world.step(&self.state, a)? {
            self.state = next;
        }
        Ok(())
    }
}

#[test]
fn mpc_tracks_a_perfect_model() {
    let world = one_box_world();
    let (s, goal) = one_box_task(2);
    let plan = rrt_plan(&world, s.clone(), &goal, &RrtConfig::default(), &mut rng(7)).unwrap();
    let mut env = Replay { world: &world, state: s };
    let log = mpc_execute(&world, &mut env, &goal, &plan, &MpcConfig::default(), &mut rng(8)).unwrap();
    assert!(log.success);
    assert_eq!(log.replans, 0);
    assert_eq!(log.executed, plan.actions.unwrap());
    assert!(log.deviations.iter().all(|&d| d < 1e-12));
}

#[test]
fn zero_threshold_replans_every_cycle() {
    let world = one_box_world();
    let (s, goal) = one_box_task(4);
    let cfg = MpcConfig {
        replan_threshold: 0.0,
        ..MpcConfig::default()
    };
    let plan = rrt_plan(&world, s.clone(), &goal, &cfg.rrt, &mut rng(9)).unwrap();
    let mut env = Replay { world: &world, state: s };
    let log = mpc_execute(&world, &mut env, &goal, &plan, &cfg, &mut rng(10)).unwrap();
    assert_eq!(log.replans, log.deviations.len());
    assert_eq!(log.costs.len(), log.executed.len() + 1);
    assert!(log.success || log.abort_reason.is_some());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn targets_stay_in_the_footprint(seed in 0u64..100_000, pg in 0.0f64..1.0, pc in 0.0f64..1.0) {
        let world = Discs { radii: vec![0.03, 0.03, 0.02], colors: vec![BLUE, YELLOW, RED] };
        let mut r = rng(seed);
        // objects near the edges push contact targets outside before clamping
        let s: Vec<[f64; 2]> = (0..3).map(|_| [r.gen_range(-0.2..0.2), r.gen_range(-0.2..0.2)]).collect();
        let goal = GoalSpec { regions: vec![region(0.17, 0.17, 0.03, BLUE), region(-0.17, 0.0, 0.03, YELLOW)] };
        let cfg = SamplerConfig { p_goal: pg, p_contact: pc.min(1.0 - pg), ..SamplerConfig::default() };
        let summary = world.summarize(&s).unwrap();
        for _ in 0..20 {
            let t = sample_target(&mut r, &summary, &goal, 2, &footprint(), &cfg);
            prop_assert_eq!(t.g.len(), 3);
            prop_assert!(t.g.iter().all(|p| footprint().contains(p)));
        }
    }
}
