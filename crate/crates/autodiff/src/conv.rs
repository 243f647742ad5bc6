//! 3D convolution (im2col + GEMM) and bilinear image sampling kernels.

use crate::error::{Result, TensorError};
use crate::real::{matmul_into, matmul_nt_into, matmul_tn_into, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub dims: [usize; 3],
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out: [usize; 3],
}

impl ConvGeom {
    pub fn new(
        input_shape: &[usize],
        kernel_shape: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let (c_in, dims) = match input_shape {
            [c, d, h, w] => (*c, [*d, *h, *w]),
            _ => {
                return Err(TensorError::InvalidShape {
                    shape: input_shape.to_vec(),
                    reason: "conv3d input must be [C,D,H,W]".into(),
                })
            }
        };
        let (c_out, kernel) = match kernel_shape {
            [co, ci, k0, k1, k2] if k0 == k1 && k1 == k2 => {
                if *ci != c_in {
                    return Err(TensorError::ShapeMismatch {
                        op: "conv3d",
                        lhs: input_shape.to_vec(),
                        rhs: kernel_shape.to_vec(),
                    });
                }
                (*co, *k0)
            }
            _ => {
                return Err(TensorError::InvalidShape {
                    shape: kernel_shape.to_vec(),
                    reason: "conv3d kernel must be [C_out,C_in,k,k,k]".into(),
                })
            }
        };
        if stride == 0 {
            return Err(TensorError::InvalidShape {
                shape: kernel_shape.to_vec(),
                reason: "stride must be positive".into(),
            });
        }
        let mut out = [0usize; 3];
        for a in 0..3 {
            let num = dims[a] as isize + 2 * padding as isize - kernel as isize;
            let extent = num.div_euclid(stride as isize) + 1;
            if num < 0 || extent < 1 {
                return Err(TensorError::ConvExtent {
                    extent: if num < 0 { num } else { extent },
                    input: input_shape.to_vec(),
                    stride,
                    padding,
                });
            }
            out[a] = extent as usize;
        }
        Ok(Self {
            c_in,
            c_out,
            dims,
            kernel,
            stride,
            padding,
            out,
        })
    }

    pub fn out_voxels(&self) -> usize {
        self.out.iter().product()
    }

    fn col_rows(&self) -> usize {
        self.c_in * self.kernel.pow(3)
    }

    /// Input index along `axis` for output position `o` and kernel tap `t`.
    #[inline]
    fn src(&self, axis: usize, o: usize, t: usize) -> Option<usize> {
        let i = (o * self.stride + t) as isize - self.padding as isize;
        (i >= 0 && (i as usize) < self.dims[axis]).then_some(i as usize)
    }

    fn im2col<T: Real>(&self, x: &[T]) -> Vec<T> {
        let [d, h, w] = self.dims;
        let [od, oh, ow] = self.out;
        let k = self.kernel;
        let n_out = self.out_voxels();
        let mut col = vec![T::zero(); self.col_rows() * n_out];
        for c in 0..self.c_in {
            let xc = &x[c * d * h * w..(c + 1) * d * h * w];
            for kd in 0..k {
                for kh in 0..k {
                    for kw in 0..k {
                        let row = ((c * k + kd) * k + kh) * k + kw;
                        let dst = &mut col[row * n_out..(row + 1) * n_out];
                        for zo in 0..od {
                            let Some(zi) = self.src(0, zo, kd) else { continue };
                            for yo in 0..oh {
                                let Some(yi) = self.src(1, yo, kh) else { continue };
                                let base = (zo * oh + yo) * ow;
                                let src_base = (zi * h + yi) * w;
                                for xo in 0..ow {
                                    if let Some(xi) = self.src(2, xo, kw) {
                                        dst[base + xo] = xc[src_base + xi];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im<T: Real>(&self, col: &[T]) -> Vec<T> {
        let [d, h, w] = self.dims;
        let [od, oh, ow] = self.out;
        let k = self.kernel;
        let n_out = self.out_voxels();
        let mut x = vec![T::zero(); self.c_in * d * h * w];
        for c in 0..self.c_in {
            let xc = &mut x[c * d * h * w..(c + 1) * d * h * w];
            for kd in 0..k {
                for kh in 0..k {
                    for kw in 0..k {
                        let row = ((c * k + kd) * k + kh) * k + kw;
                        let src = &col[row * n_out..(row + 1) * n_out];
                        for zo in 0..od {
                            let Some(zi) = self.src(0, zo, kd) else { continue };
                            for yo in 0..oh {
                                let Some(yi) = self.src(1, yo, kh) else { continue };
                                let base = (zo * oh + yo) * ow;
                                let dst_base = (zi * h + yi) * w;
                                for xo in 0..ow {
                                    if let Some(xi) = self.src(2, xo, kw) {
                                        xc[dst_base + xi] += src[base + xo];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        x
    }

    pub(crate) fn forward<T: Real>(&self, x: &[T], kernel: &[T]) -> Vec<T> {
        let col = self.im2col(x);
        let n_out = self.out_voxels();
        let mut out = vec![T::zero(); self.c_out * n_out];
        matmul_into(kernel, &col, &mut out, self.c_out, self.col_rows(), n_out, false);
        out
    }

    /// Returns `(d input, d kernel)`.
    pub(crate) fn backward<T: Real>(&self, x: &[T], kernel: &[T], g: &[T]) -> (Vec<T>, Vec<T>) {
        let col = self.im2col(x);
        let n_out = self.out_voxels();
        let rows = self.col_rows();
        let mut gk = vec![T::zero(); self.c_out * rows];
        matmul_nt_into(g, &col, &mut gk, self.c_out, n_out, rows, false);
        let mut gcol = vec![T::zero(); rows * n_out];
        matmul_tn_into(kernel, g, &mut gcol, rows, self.c_out, n_out, false);
        (self.col2im(&gcol), gk)
    }
}

/// Corner indices and weights for a bilinear lookup after border clamping.
#[inline]
pub(crate) fn bilinear_taps<T: Real>(u: T, v: T, h: usize, w: usize) -> [(usize, T); 4] {
    let max_u = T::from_usize(w - 1).unwrap();
    let max_v = T::from_usize(h - 1).unwrap();
    let u = if u.is_nan() { T::zero() } else { u.max(T::zero()).min(max_u) };
    let v = if v.is_nan() { T::zero() } else { v.max(T::zero()).min(max_v) };
    let x0 = u.floor().to_usize().unwrap().min(w - 1);
    let y0 = v.floor().to_usize().unwrap().min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = u - T::from_usize(x0).unwrap();
    let fy = v - T::from_usize(y0).unwrap();
    let one = T::one();
    [
        (y0 * w + x0, (one - fx) * (one - fy)),
        (y0 * w + x1, fx * (one - fy)),
        (y1 * w + x0, (one - fx) * fy),
        (y1 * w + x1, fx * fy),
    ]
}

pub(crate) fn bilinear_forward<T: Real>(
    image: &[T],
    [c, h, w]: [usize; 3],
    uv: &[[T; 2]],
) -> Vec<T> {
    let mut out = vec![T::zero(); uv.len() * c];
    for (n, &[u, v]) in uv.iter().enumerate() {
        let taps = bilinear_taps(u, v, h, w);
        for ch in 0..c {
            let plane = &image[ch * h * w..(ch + 1) * h * w];
            out[n * c + ch] = taps.iter().map(|&(i, wt)| wt * plane[i]).sum();
        }
    }
    out
}

pub(crate) fn bilinear_backward<T: Real>(
    g: &[T],
    [c, h, w]: [usize; 3],
    uv: &[[T; 2]],
) -> Vec<T> {
    let mut gi = vec![T::zero(); c * h * w];
    for (n, &[u, v]) in uv.iter().enumerate() {
        let taps = bilinear_taps(u, v, h, w);
        for ch in 0..c {
            let gn = g[n * c + ch];
            for &(i, wt) in &taps {
                gi[ch * h * w + i] += wt * gn;
            }
        }
    }
    gi
}
