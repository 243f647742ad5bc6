mod common;

use cdyn_autodiff::Tensor;
use cdyn_core::dynamics::{train_gnn, trajectory_samples, GnnTrainConfig};
use cdyn_core::{
    collision_adjacency, Adjacency, AdjacencyMode, DynamicsConfig, LatentSet, Model, Occupancy,
    RigidTransform,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::*;

fn random_latents(m: usize, seed: u64) -> LatentSet<f64> {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..4).map(|_| r.gen_range(-1.5..1.5)).collect()).collect();
    LatentSet::from_rows(&rows).unwrap()
}

fn random_adjacency(m: usize, p: f64, seed: u64) -> Adjacency {
    let mut r = rng(seed);
    let mut a = Adjacency::zeros(m);
    for i in 0..m {
        for j in i + 1..m {
            if r.gen_bool(p) {
                a.set(i, j, true);
                a.set(j, i, true);
            }
        }
    }
    a
}

fn model(seed: u64) -> Model<f64> {
    Model::new(tiny_config(), &mut rng(seed)).unwrap()
}

#[test]
fn empty_adjacency_keeps_every_object() {
    let m = model(1);
    let z = random_latents(4, 2);
    for passes in 1..=3 {
        let mut src = |_: usize, _: &Tensor<f64>| Ok(Adjacency::zeros(4));
        let frozen = [false, false, true, false];
        let (out, _) = m.dynamics.propagate(&m.store, &z, &frozen, passes, true, &mut src).unwrap();
        assert_eq!(out, z);
    }
}

#[test]
fn high_threshold_rollout_leaves_objects_untouched() {
    let m = Model::<f64>::new(tiny_config(), &mut rng(3)).unwrap();
    let views = views_of(&boxes(), 2, 16, 12, 4);
    let actions = vec![RigidTransform::planar(0.02, 0.0, 0.0); 3];
    for mode in [AdjacencyMode::InLoop, AdjacencyMode::OncePerStep] {
        let cfg = DynamicsConfig {
            adjacency_mode: mode,
            kappa: 1e12,
            ..DynamicsConfig::default()
        };
        let traj = m.predictor(&cfg).forward_predict(&views, &actions, 0).unwrap();
        assert_eq!(traj.len(), 4);
        for z in &traj[1..] {
            assert_eq!(z.get(1), traj[0].get(1));
            assert_ne!(z.get(0), traj[0].get(0));
        }
    }
    let dense = DynamicsConfig {
        adjacency_mode: AdjacencyMode::Dense,
        ..DynamicsConfig::default()
    };
    let traj = m.predictor(&dense).forward_predict(&views, &actions, 0).unwrap();
    assert_ne!(traj[1].get(1), traj[0].get(1));
    let none = m.predictor(&dense).forward_predict(&views, &[], 0).unwrap();
    assert_eq!(none.len(), 1);
    assert!(m.predictor(&dense).forward_predict(&views, &actions, 2).is_err());
}

#[test]
fn interventions_accumulate_exactly() {
    let m = model(5);
    let views = views_of(&boxes(), 2, 16, 12, 6);
    let cfg = DynamicsConfig::default();
    let p = m.predictor(&cfg);
    let step = RigidTransform::planar(0.01, 0.0, 0.0);
    let twice = p.intervene(&views, 0, &step.then(&step)).unwrap();
    let once = p.intervene(&views, 0, &RigidTransform::planar(0.02, 0.0, 0.0)).unwrap();
    assert_eq!(twice, once);
    let z = m.encoder.encode_scene(&m.store, &views, &m.grid).unwrap();
    assert_eq!(p.intervene(&views, 1, &RigidTransform::identity()).unwrap(), z.get(1));
}

#[test]
fn gnn_training_reduces_one_step_error() {
    let cfg = cdyn_core::ModelConfig {
        edge_hidden: 32,
        edge_dim: 16,
        node_hidden: 32,
        ..tiny_config()
    };
    let mut m = Model::<f32>::new(cfg, &mut rng(7)).unwrap();
    // teacher: every non-articulated object drifts towards the articulated one
    let mut r = rng(8);
    let mut samples = Vec::new();
    for s in 0..24 {
        let rows: Vec<Vec<f32>> = (0..3).map(|_| (0..4).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let z0 = LatentSet::from_rows(&rows).unwrap();
        let a = s % 3;
        let next: Vec<Vec<f32>> = (0..3)
            .map(|i| {
                (0..4)
                    .map(|d| if i == a { rows[a][d] + 0.1 } else { 0.7 * rows[i][d] + 0.3 * rows[a][d] })
                    .collect()
            })
            .collect();
        let frames = [z0, LatentSet::from_rows(&next).unwrap()];
        samples.extend(trajectory_samples(&frames, a, &mut |_| Ok(Adjacency::dense(3))).unwrap());
    }
    let cfg = DynamicsConfig::default();
    let (before, copy) = cdyn_core::dynamics::one_step_errors(&m.dynamics, &m.store, &samples, &cfg).unwrap();
    let train = GnnTrainConfig {
        steps: 400,
        batch_size: 8,
        lr: 3e-3,
    };
    let dynamics = m.dynamics.clone();
    let ae_before: Vec<_> = m.ae_params().iter().map(|&id| m.store.value(id).clone()).collect();
    let losses = train_gnn(&dynamics, &mut m.store, &samples, &cfg, &train, &mut rng(9), |_, _| {}).unwrap();
    let (after, _) = cdyn_core::dynamics::one_step_errors(&m.dynamics, &m.store, &samples, &cfg).unwrap();
    assert_eq!(losses.len(), 400);
    assert!(after < 0.5 * copy && after < 0.05 * before, "before {before} copy {copy} after {after}");
    let ae_after: Vec<_> = m.ae_params().iter().map(|&id| m.store.value(id).clone()).collect();
    assert_eq!(ae_before, ae_after);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn step_is_permutation_equivariant(seed in 0u64..10_000, m in 2usize..6, passes in 1usize..4, quasi in any::<bool>()) {
        let model = Model::<f32>::new(tiny_config(), &mut rng(seed)).unwrap();
        let z: LatentSet<f32> = random_latents(m, seed + 1).cast();
        let adjs: Vec<Adjacency> = (0..passes).map(|l| random_adjacency(m, 0.5, seed + 10 + l as u64)).collect();
        let a = (seed as usize) % m;
        let frozen: Vec<bool> = (0..m).map(|i| i == a).collect();
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng(seed + 2));
        let mut src = |l: usize, _: &Tensor<f32>| Ok(adjs[l].clone());
        let (out, _) = model.dynamics.propagate(&model.store, &z, &frozen, passes, quasi, &mut src).unwrap();
        let zp = z.permuted(&perm);
        let fp: Vec<bool> = perm.iter().map(|&p| frozen[p]).collect();
        let mut srcp = |l: usize, _: &Tensor<f32>| Ok(adjs[l].permuted(&perm));
        let (outp, _) = model.dynamics.propagate(&model.store, &zp, &fp, passes, quasi, &mut srcp).unwrap();
        let expect = out.permuted(&perm);
        for i in 0..m {
            for (x, y) in outp.get(i).iter().zip(expect.get(i)) {
                prop_assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn isolated_rows_are_frozen_exactly(seed in 0u64..10_000, m in 2usize..7, passes in 1usize..4) {
        let model = model(seed % 7);
        let z = random_latents(m, seed);
        let adjs: Vec<Adjacency> = (0..passes).map(|l| random_adjacency(m, 0.25, seed * 3 + l as u64)).collect();
        let frozen: Vec<bool> = (0..m).map(|i| i == 0).collect();
        let mut src = |l: usize, _: &Tensor<f64>| Ok(adjs[l].clone());
        let (out, graphs) = model.dynamics.propagate(&model.store, &z, &frozen, passes, true, &mut src).unwrap();
        prop_assert_eq!(&graphs, &adjs);
        prop_assert_eq!(out.get(0), z.get(0));
        for i in 1..m {
            if adjs.iter().all(|a| a.row_is_empty(i)) {
                prop_assert_eq!(out.get(i), z.get(i));
            }
        }
    }

    #[test]
    fn adjacency_is_symmetric_and_monotone(seed in 0u64..10_000, m in 1usize..5) {
        let mut r = rng(seed);
        let dims = [3, 6, 6];
        let occ: Vec<Occupancy> = (0..m)
            .map(|_| Occupancy::new(dims, (0..108).map(|_| r.gen_bool(0.03)).collect()))
            .collect();
        let mut prev = Adjacency::zeros(m);
        for d in 0..4 {
            let a = collision_adjacency(&occ, d);
            prop_assert!(a.is_symmetric() && a.has_zero_diagonal());
            for i in 0..m {
                for j in 0..m {
                    prop_assert!(!prev.get(i, j) || a.get(i, j));
                }
            }
            prev = a;
        }
        let same = collision_adjacency(&[occ[0].clone(), occ[0].clone()], 0);
        prop_assert_eq!(same.get(0, 1), occ[0].count() > 0);
    }
}
