use std::rc::Rc;

use cdyn_autodiff::gradcheck::{check_input, check_params, GradCheck};
use cdyn_autodiff::{Mlp, ParamStore, SparseRows, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Weighted sum so that every output entry gets a distinct upstream gradient.
fn weighted_sum(t: &Tape<f64>, v: cdyn_autodiff::Var) -> cdyn_autodiff::Var {
    let shape = t.shape(v);
    let w = random(&shape, 999);
    t.sum(t.mul_const(v, Rc::new(w)).unwrap())
}

#[test]
fn sigmoid_matvec_matches_finite_difference() {
    let mut store = ParamStore::<f64>::new();
    let w = store.add("W", random(&[3, 4], 1));
    let v = random(&[4, 1], 2);
    let cfg = GradCheck {
        step: 1e-3,
        ..GradCheck::default()
    };
    let rep = check_params(&mut store, &[w], cfg, |t, s| {
        let y = t.matmul(t.param(s, w), t.constant(v.clone()))?;
        Ok(t.sum(t.sigmoid(y)))
    })
    .unwrap();
    assert_eq!(rep.checked, 12);
    assert!(rep.max_rel_err <= TOL, "{rep:?}");
}

#[test]
fn elementwise_and_broadcast_ops() {
    let a = random(&[3, 4], 10);
    let b = random(&[3, 4], 11);
    let row = random(&[1, 4], 12);
    let col = random(&[3, 1], 13);
    let rep = check_input(&a, GradCheck::default(), |t, x| {
        let y = t.add(x, t.constant(b.clone()))?;
        let y = t.mul(y, x)?;
        let y = t.sub(y, t.scale(x, 0.3))?;
        let y = t.add_row(y, t.constant(row.clone()))?;
        let y = t.add_col(y, t.constant(col.clone()))?;
        let y = t.softplus(y);
        let y = t.add(t.exp(t.scale(y, 0.2)), t.relu(x))?;
        Ok(weighted_sum(t, y))
    })
    .unwrap();
    assert!(rep.max_rel_err <= TOL, "{rep:?}");
}

#[test]
fn broadcast_operands_receive_reduced_gradients() {
    let mut store = ParamStore::<f64>::new();
    let row = store.add("row", random(&[1, 5], 20));
    let col = store.add("col", random(&[4, 1], 21));
    let x = random(&[4, 5], 22);
    let rep = check_params(&mut store, &[row, col], GradCheck::default(), |t, s| {
        let y = t.add_row(t.constant(x.clone()), t.param(s, row))?;
        let y = t.add_col(y, t.param(s, col))?;
        Ok(weighted_sum(t, t.sigmoid(y)))
    })
    .unwrap();
    assert!(rep.max_rel_err <= TOL, "{rep:?}");
}

#[test]
fn structural_ops() {
    let a = random(&[4, 3], 30);
    let other = random(&[4, 2], 31);
    let idx = [3usize, 0, 0, 2, 1];
    let rep = check_input(&a, GradCheck::default(), |t, x| {
        let c = t.concat_cols(&[x, t.constant(other.clone()), x])?;
        let r = t.concat_rows(&[c, t.scale(c, -0.5)])?;
        let tr = t.transpose(r)?;
        let flat = t.reshape(tr, &[8, 8])?;
        let g = t.gather_rows(x, &idx)?;
        let s = t.scatter_add_rows(g, &[1, 1, 0, 2, 0], 3)?;
        let m = t.mean(t.mul(s, s)?);
        let total = t.add(weighted_sum(t, t.sigmoid(flat)), m)?;
        Ok(total)
    })
    .unwrap();
    assert!(rep.max_rel_err <= TOL, "{rep:?}");
}

#[test]
fn sparse_weighted_mean() {
    let a = random(&[5, 3], 40);
    let s = Rc::new(SparseRows::new(
        vec![
            vec![(0, 0.5), (4, 0.5)],
            vec![],
            vec![(1, 1.0 / 3.0), (2, 1.0 / 3.0), (3, 1.0 / 3.0)],
        ],
        5,
    ));
    let rep = check_input(&a, GradCheck::default(), |t, x| {
        let y = t.sparse_rows(x, Rc::clone(&s))?;
        Ok(weighted_sum(t, t.softplus(y)))
    })
    .unwrap();
    assert!(rep.max_rel_err <= TOL, "{rep:?}");
}

#[test]
fn conv3d_input_and_kernel() {
    let mut store = ParamStore::<f64>::new();
    let k = store.add("k", random(&[2, 2, 3, 3, 3], 50));
    let x = random(&[2, 4, 5, 3], 51);
    for stride in [1, 2] {
        let rep = check_params(&mut store, &[k], GradCheck::default(), |t, s| {
            let y = t.conv3d(t.constant(x.clone()), t.param(s, k), stride, 1)?;
            Ok(weighted_sum(t, y))
        })
        .unwrap();
        assert!(rep.max_rel_err <= TOL, "kernel stride {stride}: {rep:?}");
        let kv = store.value(k).clone();
        let rep = check_input(&x, GradCheck::default(), |t, xi| {
            let y = t.conv3d(xi, t.constant(kv.clone()), stride, 1)?;
            Ok(weighted_sum(t, y))
        })
        .unwrap();
        assert!(rep.max_rel_err <= TOL, "input stride {stride}: {rep:?}");
    }
}

#[test]
fn bilinear_image_gradient() {
    let img = random(&[3, 4, 6], 60);
    let uv = Rc::new(vec![[0.3, 0.7], [4.9, 2.2], [-1.0, 5.0], [2.5, 1.5], [5.0, 3.0]]);
    let rep = check_input(&img, GradCheck::default(), |t, x| {
        let y = t.bilinear_sample(x, Rc::clone(&uv))?;
        Ok(weighted_sum(t, y))
    })
    .unwrap();
    assert!(rep.max_rel_err <= TOL, "{rep:?}");
}

#[test]
fn mlp_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let mut store = ParamStore::<f64>::new();
    let mlp = Mlp::new(&mut store, "mlp", &[5, 8, 8, 2], &mut rng);
    let x = random(&[6, 5], 71);
    let rep = check_params(&mut store, &mlp.params(), GradCheck::default(), |t, s| {
        let y = mlp.forward(t, s, t.constant(x.clone()))?;
        Ok(weighted_sum(t, y))
    })
    .unwrap();
    assert!(rep.max_rel_err <= TOL, "{rep:?}");
}
