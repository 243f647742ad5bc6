mod common;

use std::rc::Rc;

use cdyn_autodiff::gradcheck::{check_input, check_params, GradCheck};
use cdyn_autodiff::{ParamStore, Tape, Tensor, Var};
use cdyn_core::decoder::RadianceVars;
use cdyn_core::dynamics::{gnn_batch_loss, GnnSample};
use cdyn_core::render::{compose_var, recon_loss_var, volume_render_var, RaySamples, Sampling};
use cdyn_core::{Adjacency, Model, Vec3};
use rand::rngs::mock::StepRng;
use rand::Rng;

use common::*;

const TOL: f64 = 1e-4;

fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.gen_range(lo..hi)).collect()).unwrap()
}

fn weighted_sum(t: &Tape<f64>, v: Var, seed: u64) -> Var {
    let w = random(&t.shape(v), seed, -1.0, 1.0);
    t.sum(t.mul_const(v, Rc::new(w)).unwrap())
}

/// Biases start at zero, which puts ReLUs fed by all-zero feature voxels
/// exactly on their kink; move them off it. The damped output layer of the
/// node network is restored to full scale so its gradients are not tiny.
fn model() -> Model<f64> {
    let mut m = Model::<f64>::new(tiny_config(), &mut rng(11)).unwrap();
    let mut r = rng(12);
    let ids: Vec<_> = m.store.ids().collect();
    for id in ids {
        if m.store.get(id).name == "gnn.node.2.weight" {
            for v in m.store.get_mut(id).value_mut().data_mut() {
                *v *= 100.0;
            }
        }
        if m.store.get(id).name.ends_with(".bias") {
            for v in m.store.get_mut(id).value_mut().data_mut() {
                *v = r.gen_range(-0.2..0.2);
            }
        }
    }
    m
}

fn cfg() -> GradCheck {
    GradCheck {
        step: 1e-6,
        abs_floor: 1e-7,
        max_entries: 12,
    }
}

#[test]
fn encoder_gradients() {
    let mut m = model();
    let views = views_of(&boxes(), 2, 10, 8, 1);
    let ids = m.encoder.params();
    let (enc, grid) = (m.encoder.clone(), m.grid.clone());
    let rep = check_params(&mut m.store, &ids, cfg(), |t, s| {
        let z = enc.encode_scene_var(t, s, &views, &grid).unwrap();
        Ok(weighted_sum(t, z, 5))
    })
    .unwrap();
    assert!(rep.checked > 50);
    assert!(rep.max_rel_err <= TOL, "{rep:?}");
}

#[test]
fn decoder_gradients_in_parameters_and_latent() {
    let mut m = model();
    let mut r = rng(4);
    let points: Vec<Vec3> = (0..9)
        .map(|_| Vec3::new(r.gen_range(-0.2..0.2), r.gen_range(-0.2..0.2), r.gen_range(0.0..0.1)))
        .collect();
    let z = random(&[2, 4], 8, -1.0, 1.0);
    let dec = m.decoder.clone();
    let x = dec.input_tensor::<f64>(&points).unwrap();
    let loss = |t: &Tape<f64>, s: &ParamStore<f64>, zv: Var| {
        let xv = t.constant(x.clone());
        let out = dec.query_var(t, s, xv, zv, &[0, 1]).unwrap();
        let mut acc = Vec::new();
        for (i, o) in out.iter().enumerate() {
            acc.push(weighted_sum(t, o.sigma, 20 + i as u64));
            acc.push(weighted_sum(t, o.color, 30 + i as u64));
        }
        acc.into_iter().reduce(|a, b| t.add(a, b).unwrap()).unwrap()
    };
    let mut ids = dec.params();
    let z_id = m.store.add("test.z", z);
    ids.push(z_id);
    let rep = check_params(&mut m.store, &ids, cfg(), |t, s| {
        let zv = t.param(s, z_id);
        Ok(loss(t, s, zv))
    })
    .unwrap();
    assert!(rep.max_rel_err <= TOL, "{rep:?}");
}

#[test]
fn dynamics_gradients() {
    let mut m = model();
    let samples: Vec<GnnSample<f64>> = (0..2)
        .map(|i| GnnSample {
            input: random(&[3, 4], 40 + i, -1.0, 1.0),
            target: random(&[3, 4], 50 + i, -1.0, 1.0),
            articulated: i as usize,
            adjacency: if i == 0 {
                Adjacency::dense(3)
            } else {
                Adjacency::from_fn(3, |a, b| a + b == 1 || a + b == 3)
            },
        })
        .collect();
    let batch: Vec<&GnnSample<f64>> = samples.iter().collect();
    let dynamics = m.dynamics.clone();
    let ids = dynamics.params();
    for passes in 1..=3 {
        for quasi_static in [true, false] {
            let rep = check_params(&mut m.store, &ids, cfg(), |t, s| {
                Ok(gnn_batch_loss(t, s, &dynamics, &batch, passes, quasi_static).unwrap())
            })
            .unwrap();
            assert!(rep.max_rel_err <= TOL, "L={passes} {rep:?}");
        }
    }
}

#[test]
fn composition_gradients() {
    let mut store = ParamStore::<f64>::new();
    let mut ids = Vec::new();
    for j in 0..3u64 {
        let sigma = random(&[5, 1], 60 + j, 0.0, 3.0);
        ids.push(store.add(format!("sigma{j}"), sigma));
        ids.push(store.add(format!("color{j}"), random(&[5, 3], 70 + j, 0.0, 1.0)));
    }
    let rep = check_params(&mut store, &ids, GradCheck::default(), |t, s| {
        let parts: Vec<RadianceVars> = (0..3)
            .map(|j| RadianceVars {
                sigma: t.param(s, ids[2 * j]),
                color: t.param(s, ids[2 * j + 1]),
            })
            .collect();
        let c = compose_var(t, &parts);
        Ok(weighted_sum(t, c, 80))
    })
    .unwrap();
    assert!(rep.max_rel_err <= TOL, "{rep:?}");
}

#[test]
fn quadrature_gradients() {
    let samples = RaySamples {
        n_rays: 3,
        segments: vec![Some((0, 4)), None, Some((4, 3))],
        points: vec![Vec3::zeros(); 7],
        deltas: vec![0.1, 0.05, 0.2, 0.1, 0.3, 0.01, 0.15],
    };
    let composed = random(&[7, 4], 90, 0.0, 4.0);
    let rep = check_input(&composed, GradCheck::default(), |t, x| {
        Ok(weighted_sum(t, volume_render_var(t, x, &samples), 91))
    })
    .unwrap();
    assert_eq!(rep.checked, 24);
    assert!(rep.max_rel_err <= TOL, "{rep:?}");
}

#[test]
fn reconstruction_loss_gradients_on_four_rays() {
    let mut m = model();
    let views = views_of(&boxes(), 2, 16, 12, 2);
    let view = &views[1];
    let total = view.mask_total();
    let pixels: Vec<usize> = total.pixels().into_iter().step_by(5).take(4).collect();
    assert_eq!(pixels.len(), 4);
    let ids = m.ae_params();
    let (enc, dec, grid) = (m.encoder.clone(), m.decoder.clone(), m.grid.clone());
    let rep = check_params(&mut m.store, &ids, cfg(), |t, s| {
        let z = enc.encode_scene_var(t, s, &views, &grid).unwrap();
        Ok(recon_loss_var(
            t,
            s,
            &dec,
            z,
            view,
            &total,
            &pixels,
            &grid.bounds,
            6,
            Sampling::<StepRng>::Midpoint,
        )
        .unwrap())
    })
    .unwrap();
    assert!(rep.checked > 100);
    assert!(rep.max_rel_err <= TOL, "{rep:?}");
}
