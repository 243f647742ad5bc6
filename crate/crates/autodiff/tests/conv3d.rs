use std::rc::Rc;

use cdyn_autodiff::{Tape, Tensor, TensorError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct seven-loop convolution with zero padding.
fn brute_conv(
    x: &[f64],
    [c_in, d, h, w]: [usize; 4],
    k: &[f64],
    c_out: usize,
    ks: usize,
    stride: usize,
    pad: usize,
) -> (Vec<f64>, [usize; 3]) {
    let o = |n: usize| (n + 2 * pad - ks) / stride + 1;
    let (od, oh, ow) = (o(d), o(h), o(w));
    let mut out = vec![0.0; c_out * od * oh * ow];
    for co in 0..c_out {
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = 0.0;
                    for ci in 0..c_in {
                        for a in 0..ks {
                            for b in 0..ks {
                                for c in 0..ks {
                                    let zi = (z * stride + a) as isize - pad as isize;
                                    let yi = (y * stride + b) as isize - pad as isize;
                                    let xi = (xx * stride + c) as isize - pad as isize;
                                    if zi < 0 || yi < 0 || xi < 0 {
                                        continue;
                                    }
                                    let (zi, yi, xi) = (zi as usize, yi as usize, xi as usize);
                                    if zi >= d || yi >= h || xi >= w {
                                        continue;
                                    }
                                    let kv = k[(((co * c_in + ci) * ks + a) * ks + b) * ks + c];
                                    acc += kv * x[((ci * d + zi) * h + yi) * w + xi];
                                }
                            }
                        }
                    }
                    out[((co * od + z) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    (out, [od, oh, ow])
}

fn run_conv(x: Tensor<f64>, k: Tensor<f64>, stride: usize, pad: usize) -> Result<Rc<Tensor<f64>>, TensorError> {
    let t = Tape::new();
    let xv = t.constant(x);
    let kv = t.constant(k);
    let y = t.conv3d(xv, kv, stride, pad)?;
    Ok(t.value(y))
}

#[test]
fn ones_input_ones_kernel_interior_is_27() {
    let x = Tensor::full(&[1, 5, 5, 5], 1.0).unwrap();
    let k = Tensor::full(&[1, 1, 3, 3, 3], 1.0).unwrap();
    let y = run_conv(x, k, 1, 1).unwrap();
    assert_eq!(y.shape(), &[1, 5, 5, 5]);
    // centre voxel sees the full 3x3x3 window
    assert_eq!(y.data()[(2 * 5 + 2) * 5 + 2], 27.0);
    // a corner sees 2x2x2
    assert_eq!(y.data()[0], 8.0);
}

#[test]
fn delta_kernel_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<f64> = (0..2 * 4 * 3 * 5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = Tensor::new(&[2, 4, 3, 5], data.clone()).unwrap();
    let mut k = vec![0.0; 2 * 2 * 27];
    for c in 0..2 {
        k[(c * 2 + c) * 27 + 13] = 1.0;
    }
    let y = run_conv(x, Tensor::new(&[2, 2, 3, 3, 3], k).unwrap(), 1, 1).unwrap();
    assert_eq!(y.data(), &data[..]);
}

#[test]
fn output_extent_formula() {
    let x = Tensor::zeros(&[1, 16, 64, 64]).unwrap();
    let k = Tensor::zeros(&[4, 1, 3, 3, 3]).unwrap();
    let y = run_conv(x, k, 2, 1).unwrap();
    assert_eq!(y.shape(), &[4, 8, 32, 32]);
}

#[test]
fn degenerate_extent_is_rejected() {
    let x = Tensor::zeros(&[1, 1, 1, 1]).unwrap();
    let k = Tensor::zeros(&[1, 1, 3, 3, 3]).unwrap();
    match run_conv(x, k, 1, 0) {
        Err(TensorError::ConvExtent { stride: 1, padding: 0, .. }) => {}
        other => panic!("expected ConvExtent, got {other:?}"),
    }
}

#[test]
fn channel_mismatch_is_rejected() {
    let x = Tensor::zeros(&[2, 3, 3, 3]).unwrap();
    let k = Tensor::zeros(&[1, 3, 3, 3, 3]).unwrap();
    assert!(matches!(
        run_conv(x, k, 1, 1),
        Err(TensorError::ShapeMismatch { op: "conv3d", .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matches_brute_force(
        c_in in 1usize..=2,
        c_out in 1usize..=2,
        d in 1usize..=5,
        h in 1usize..=5,
        w in 1usize..=5,
        stride in 1usize..=2,
        pad in 0usize..=1,
        seed in any::<u64>(),
    ) {
        prop_assume!(d + 2 * pad >= 3 && h + 2 * pad >= 3 && w + 2 * pad >= 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xd: Vec<f64> = (0..c_in * d * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let kd: Vec<f64> = (0..c_out * c_in * 27).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (want, od) = brute_conv(&xd, [c_in, d, h, w], &kd, c_out, 3, stride, pad);
        let got = run_conv(
            Tensor::new(&[c_in, d, h, w], xd).unwrap(),
            Tensor::new(&[c_out, c_in, 3, 3, 3], kd).unwrap(),
            stride,
            pad,
        ).unwrap();
        prop_assert_eq!(got.shape(), &[c_out, od[0], od[1], od[2]][..]);
        for (g, e) in got.data().iter().zip(&want) {
            prop_assert!((g - e).abs() <= 1e-5 * e.abs().max(1.0), "{} vs {}", g, e);
        }
    }
}
