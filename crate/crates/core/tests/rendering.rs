mod common;

use cdyn_autodiff::{ParamStore, Tape, Tensor};
use cdyn_core::decoder::RadianceVars;
use cdyn_core::render::{compose, compose_var, integrate, render_rays, RaySamples, Sampling};
use cdyn_core::{Aabb, LatentSet, Model, Ray, Vec3};
use proptest::prelude::*;
use rand::rngs::mock::StepRng;
use rand::Rng;

use common::*;

fn unit(v: Vec3) -> Vec3 {
    v.normalize()
}

fn homogeneous_error(sigma: f64, length: f64, n: usize) -> f64 {
    let ray = Ray {
        origin: Vec3::new(-1.0, 0.0, 0.0),
        dir: Vec3::x(),
    };
    let b = Aabb::new(Vec3::new(0.0, -1.0, -1.0), Vec3::new(length, 1.0, 1.0));
    let s = RaySamples::new::<StepRng>(&[ray], &b, n, Sampling::Midpoint);
    let c0 = [0.2, 0.7, 1.0];
    let (c, trans, _) = integrate(&vec![sigma; n], &vec![c0; n], &s.deltas);
    assert!(trans.windows(2).all(|w| w[1] <= w[0]));
    assert!(trans.iter().all(|&t| t > 0.0 && t <= 1.0));
    let closed = 1.0 - (-sigma * length).exp();
    (0..3).map(|a| (c[a] - closed * c0[a]).abs()).fold(0.0, f64::max)
}

#[test]
fn slab_bounds_for_axis_ray() {
    let b = Aabb::new(Vec3::new(0.0, -0.2, -0.2), Vec3::new(0.4, 0.2, 0.2));
    let ray = Ray {
        origin: Vec3::new(-1.0, 0.0, 0.0),
        dir: Vec3::x(),
    };
    let (near, far) = b.ray_bounds(&ray).unwrap();
    assert!((near - 1.0).abs() < 1e-12 && (far - near - 0.4).abs() < 1e-12);
    let parallel = Ray {
        origin: Vec3::new(-1.0, 0.5, 0.0),
        dir: Vec3::x(),
    };
    assert_eq!(b.ray_bounds(&parallel), None);
}

#[test]
fn quadrature_converges_monotonically() {
    let mut last = f64::INFINITY;
    for n in [8, 16, 32, 64, 128, 256] {
        let e = homogeneous_error(12.0, 0.3, n);
        assert!(e < last, "n={n}: {e} !< {last}");
        last = e;
    }
    assert!(last <= 1e-3);
}

#[test]
fn zero_density_convention_in_backward() {
    let tape = Tape::<f64>::new();
    let s1 = tape.leaf(Tensor::new(&[1, 1], vec![0.0]).unwrap());
    let c1 = tape.leaf(Tensor::new(&[1, 3], vec![0.3, 0.4, 0.5]).unwrap());
    let s2 = tape.leaf(Tensor::new(&[1, 1], vec![0.0]).unwrap());
    let c2 = tape.leaf(Tensor::new(&[1, 3], vec![0.9, 0.1, 0.2]).unwrap());
    let parts = [
        RadianceVars { sigma: s1, color: c1 },
        RadianceVars { sigma: s2, color: c2 },
    ];
    let out = compose_var(&tape, &parts);
    assert_eq!(tape.value(out).data(), &[0.0; 4]);
    let w = Tensor::new(&[1, 4], vec![2.0, 1.0, 1.0, 1.0]).unwrap();
    let root = tape.sum(tape.mul_const(out, std::rc::Rc::new(w)).unwrap());
    let g = tape.backward(root, &mut ParamStore::new()).unwrap();
    assert_eq!(g.get(s1).unwrap().data(), &[2.0]);
    assert_eq!(g.get(c2).unwrap().data(), &[0.0; 3]);
}

fn random_latents(m: usize, k: usize, seed: u64) -> LatentSet<f32> {
    let mut r = rng(seed);
    let rows: Vec<Vec<f32>> = (0..m).map(|_| (0..k).map(|_| r.gen_range(-2.0..2.0)).collect()).collect();
    LatentSet::from_rows(&rows).unwrap()
}

fn camera_rays(n: usize) -> Vec<Ray> {
    let cam = &ring_cameras(1, 16, 12)[0];
    (0..cam.width * cam.height)
        .step_by((cam.width * cam.height / n).max(1))
        .map(|p| cam.ray((p % cam.width) as f64, (p / cam.width) as f64))
        .collect()
}

#[test]
fn rendering_is_invariant_to_object_order() {
    let m = Model::<f32>::new(tiny_config(), &mut rng(1)).unwrap();
    let z = random_latents(4, 4, 2);
    let rays = camera_rays(60);
    let b = m.grid.bounds;
    let base = render_rays(&m.store, &m.decoder, &z, &rays, &b, 16).unwrap();
    for perm in [[3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]] {
        let other = render_rays(&m.store, &m.decoder, &z.permuted(&perm), &rays, &b, 16).unwrap();
        assert_eq!(base, other);
    }
    assert!(base.iter().flatten().all(|&c| (0.0..=1.0).contains(&c)));
}

/// A decoder whose density collapses to ~1e-17 for latents with a large
/// negative first coordinate.
fn vanishing_fixture() -> Model<f64> {
    let mut m = Model::<f64>::new(tiny_config(), &mut rng(3)).unwrap();
    let set = |store: &mut ParamStore<f64>, name: &str, f: &dyn Fn(usize, f64) -> f64| {
        let id = store.lookup(name).unwrap();
        for (i, v) in store.get_mut(id).value_mut().data_mut().iter_mut().enumerate() {
            *v = f(i, *v);
        }
    };
    let h = tiny_config().nerf_hidden;
    set(&mut m.store, "nerf.first_z.weight", &|i, v| if i < h { 1.0 } else { v });
    set(&mut m.store, "nerf.trunk1.bias", &|_, _| 0.0);
    set(&mut m.store, "nerf.sigma.bias", &|_, _| -40.0);
    set(&mut m.store, "nerf.sigma.weight", &|_, v| 400.0 * v.abs());
    m
}

#[test]
fn near_empty_object_does_not_change_rendering() {
    let m = vanishing_fixture();
    let visible = vec![0.0, 0.4, -0.3, 0.8];
    let vanished = vec![-1e3, 0.1, 0.2, -0.5];
    let rays = camera_rays(80);
    let b = m.grid.bounds;
    let one = LatentSet::from_rows(&[visible.clone()]).unwrap();
    let both = LatentSet::from_rows(&[visible, vanished.clone()]).unwrap();
    let a = render_rays(&m.store, &m.decoder, &one, &rays, &b, 32).unwrap();
    let c = render_rays(&m.store, &m.decoder, &both, &rays, &b, 32).unwrap();
    let lit = a.iter().filter(|p| p.iter().any(|&v| v > 0.05)).count();
    assert!(lit > 5, "fixture renders almost nothing ({lit} lit rays)");
    for (p, q) in a.iter().zip(&c) {
        for ch in 0..3 {
            assert!((p[ch] - q[ch]).abs() <= 1e-6, "{p:?} vs {q:?}");
        }
    }
    let alone = LatentSet::from_rows(&[vanished]).unwrap();
    let dark = render_rays(&m.store, &m.decoder, &alone, &rays, &b, 32).unwrap();
    assert!(dark.iter().flatten().all(|&v| v < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn homogeneous_medium_within_tolerance(sigma in 0.5f64..60.0, length in 0.05f64..0.6) {
        prop_assert!(homogeneous_error(sigma, length, 256) <= 1e-3);
    }

    #[test]
    fn slab_bounds_match_dense_membership(
        ox in -1.0f64..1.0, oy in -1.0f64..1.0, oz in 0.3f64..1.0,
        tx in -0.25f64..0.25, ty in -0.25f64..0.25, tz in -0.02f64..0.12,
    ) {
        let b = Aabb::new(Vec3::new(-0.2, -0.2, 0.0), Vec3::new(0.2, 0.2, 0.1));
        let origin = Vec3::new(ox, oy, oz);
        let ray = Ray { origin, dir: unit(Vec3::new(tx, ty, tz) - origin) };
        let reach = 3.0;
        let n = 10_000;
        let step = reach / n as f64;
        let inside: Vec<f64> = (0..=n)
            .map(|i| i as f64 * step)
            .filter(|&a| b.contains(&ray.at(a)))
            .collect();
        match b.ray_bounds(&ray) {
            None => prop_assert!(inside.is_empty()),
            Some((near, far)) => {
                if let (Some(first), Some(last)) = (inside.first(), inside.last()) {
                    prop_assert!((first - near).abs() <= step + 1e-12);
                    prop_assert!((last - far).abs() <= step + 1e-12);
                } else {
                    prop_assert!(far - near <= step);
                }
            }
        }
    }

    #[test]
    fn compose_is_symmetric_and_bounded(
        s in proptest::collection::vec(0.0f64..5.0, 3),
        c in proptest::collection::vec(0.0f64..1.0, 9),
    ) {
        let cols: Vec<[[f64; 3]; 1]> = (0..3).map(|j| [[c[3 * j], c[3 * j + 1], c[3 * j + 2]]]).collect();
        let sig: Vec<[f64; 1]> = s.iter().map(|&v| [v]).collect();
        let fwd = compose(&[&sig[0][..], &sig[1][..], &sig[2][..]], &[&cols[0][..], &cols[1][..], &cols[2][..]]);
        let rev = compose(&[&sig[2][..], &sig[0][..], &sig[1][..]], &[&cols[2][..], &cols[0][..], &cols[1][..]]);
        prop_assert_eq!(&fwd, &rev);
        prop_assert!(fwd.0[0] >= 0.0);
        prop_assert!(fwd.1[0].iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn decoder_outputs_are_valid(seed in 0u64..1000) {
        let m = Model::<f32>::new(tiny_config(), &mut rng(seed)).unwrap();
        let z = random_latents(2, 4, seed + 1);
        let mut r = rng(seed + 2);
        let pts: Vec<Vec3> = (0..50)
            .map(|_| Vec3::new(r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3), r.gen_range(-0.1..0.2)))
            .collect();
        for rad in m.decoder.query(&m.store, &pts, &z, 17).unwrap() {
            prop_assert!(rad.sigma.iter().all(|&s| s >= 0.0));
            prop_assert!(rad.color.iter().flatten().all(|&c| (0.0..=1.0).contains(&c)));
        }
    }
}
