//! Density/colour composition, ray sampling, volumetric quadrature and the
//! masked reconstruction loss.

use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use cdyn_autodiff::{CustomOp, ParamStore, Real, Tape, Tensor, Var};
use rand::Rng;

use crate::decoder::{Decoder, RadianceVars};
use crate::error::Result;
use crate::geometry::{Aabb, Camera, Ray, Vec3};
use crate::image::{Image, Mask, PosedView};
use crate::latent::LatentSet;

/// Below this total density the composed colour is defined as black.
pub const COMPOSE_EPS: f64 = 1e-8;

/// `sigma = sum_j sigma_j`, `c = sum_j sigma_j c_j / sigma` (black when
/// `sigma <= eps`). Inputs are per-object slices over the same points.
pub fn compose<T: Real>(sigmas: &[&[T]], colors: &[&[[T; 3]]]) -> (Vec<T>, Vec<[T; 3]>) {
    let n = sigmas.first().map_or(0, |s| s.len());
    let eps = T::lit(COMPOSE_EPS);
    let mut sigma = vec![T::zero(); n];
    let mut color = vec![[T::zero(); 3]; n];
    let mut terms: Vec<(T, [T; 3])> = Vec::with_capacity(sigmas.len());
    for i in 0..n {
        // Summing in sorted order makes the result independent of object order.
        terms.clear();
        terms.extend(sigmas.iter().zip(colors).map(|(sj, cj)| (sj[i], cj[i])));
        terms.sort_by(|a, b| {
            let ka = [a.0, a.1[0], a.1[1], a.1[2]];
            let kb = [b.0, b.1[0], b.1[1], b.1[2]];
            ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut s = T::zero();
        let mut acc = [T::zero(); 3];
        for (sj, cj) in &terms {
            s += *sj;
            for a in 0..3 {
                acc[a] += *sj * cj[a];
            }
        }
        sigma[i] = s;
        if s > eps {
            color[i] = match terms.as_slice() {
                [(_, c)] => *c,
                _ => acc.map(|v| v / s),
            };
        }
    }
    (sigma, color)
}

/// Tape op for [`compose`]: inputs `sigma_1, c_1, ..., sigma_m, c_m`
/// (`[n,1]`, `[n,3]`), output `[n, 4]` holding `(sigma, r, g, b)`.
struct ComposeOp;

impl<T: Real> CustomOp<T> for ComposeOp {
    fn name(&self) -> &'static str {
        "compose"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Vec<Option<Tensor<T>>> {
        let n = output.shape()[0];
        let eps = T::lit(COMPOSE_EPS);
        let m = inputs.len() / 2;
        let mut grads: Vec<Vec<T>> = (0..m)
            .flat_map(|_| [vec![T::zero(); n], vec![T::zero(); 3 * n]])
            .collect();
        for i in 0..n {
            let s = output.data()[4 * i];
            let c = &output.data()[4 * i + 1..4 * i + 4];
            let g = &grad_out.data()[4 * i..4 * i + 4];
            for j in 0..m {
                let sj = inputs[2 * j].data()[i];
                let cj = &inputs[2 * j + 1].data()[3 * i..3 * i + 3];
                let mut gs = g[0];
                if s > eps {
                    for a in 0..3 {
                        gs += g[1 + a] * (cj[a] - c[a]) / s;
                        grads[2 * j + 1][3 * i + a] = g[1 + a] * sj / s;
                    }
                }
                grads[2 * j][i] = gs;
            }
        }
        grads
            .into_iter()
            .enumerate()
            .map(|(idx, g)| {
                let shape = if idx % 2 == 0 { [n, 1] } else { [n, 3] };
                Some(Tensor::new(&shape, g).expect("compose grad shape"))
            })
            .collect()
    }
}

/// Records the composition of per-object radiance on the tape.
pub fn compose_var<T: Real>(tape: &Tape<T>, parts: &[RadianceVars]) -> Var {
    let (sigma, color) = {
        let sig: Vec<Rc<Tensor<T>>> = parts.iter().map(|p| tape.value(p.sigma)).collect();
        let col: Vec<Rc<Tensor<T>>> = parts.iter().map(|p| tape.value(p.color)).collect();
        let cols: Vec<&[[T; 3]]> = col.iter().map(|c| as_rgb(c.data())).collect();
        let sigs: Vec<&[T]> = sig.iter().map(|s| s.data()).collect();
        compose(&sigs, &cols)
    };
    let n = sigma.len();
    let mut data = Vec::with_capacity(4 * n);
    for (s, c) in sigma.iter().zip(&color) {
        data.push(*s);
        data.extend_from_slice(c);
    }
    let inputs: Vec<Var> = parts.iter().flat_map(|p| [p.sigma, p.color]).collect();
    tape.custom(
        &inputs,
        Tensor::new(&[n, 4], data).expect("composed shape"),
        Rc::new(ComposeOp),
    )
}

fn as_rgb<T>(data: &[T]) -> &[[T; 3]] {
    assert_eq!(data.len() % 3, 0);
    // SAFETY: [T; 3] has the layout of three consecutive T.
    unsafe { std::slice::from_raw_parts(data.as_ptr() as *const [T; 3], data.len() / 3) }
}

/// Quadrature along one ray: returns the colour and the transmittance in
/// front of each sample, plus the final transmittance.
pub fn integrate<T: Real>(sigma: &[T], color: &[[T; 3]], delta: &[T]) -> ([T; 3], Vec<T>, T) {
    let mut t = T::one();
    let mut out = [T::zero(); 3];
    let mut trans = Vec::with_capacity(sigma.len());
    for i in 0..sigma.len() {
        trans.push(t);
        let decay = (-(sigma[i] * delta[i])).exp();
        let w = t * (T::one() - decay);
        for a in 0..3 {
            out[a] += w * color[i][a];
        }
        t *= decay;
    }
    (out, trans, t)
}

/// Sample positions along a batch of rays; rays that miss the workspace
/// have no samples.
#[derive(Clone, Debug)]
pub struct RaySamples {
    pub n_rays: usize,
    /// `(first sample, count)` per ray.
    pub segments: Vec<Option<(usize, usize)>>,
    pub points: Vec<Vec3>,
    pub deltas: Vec<f64>,
}

#[derive(Debug)]
pub enum Sampling<'a, R: Rng + ?Sized> {
    /// Bin midpoints.
    Midpoint,
    /// One uniform jitter per bin.
    Stratified(&'a mut R),
}

impl RaySamples {
    /// `n` samples per ray on `[near, far]` of its workspace crossing.
    /// `delta_i = alpha_{i+1} - alpha_i`, and the last sample runs to `far`.
    pub fn new<R: Rng + ?Sized>(
        rays: &[Ray],
        bounds: &Aabb,
        n: usize,
        mut sampling: Sampling<'_, R>,
    ) -> Self {
        let n = n.max(1);
        let mut segments = Vec::with_capacity(rays.len());
        let mut points = Vec::new();
        let mut deltas = Vec::new();
        for ray in rays {
            let Some((near, far)) = bounds.ray_bounds(ray) else {
                segments.push(None);
                continue;
            };
            if !(far > near) {
                segments.push(None);
                continue;
            }
            let bin = (far - near) / n as f64;
            let alphas: Vec<f64> = (0..n)
                .map(|i| {
                    let jitter = match &mut sampling {
                        Sampling::Midpoint => 0.5,
                        Sampling::Stratified(rng) => rng.gen::<f64>(),
                    };
                    near + (i as f64 + jitter) * bin
                })
                .collect();
            segments.push(Some((points.len(), n)));
            for i in 0..n {
                points.push(ray.at(alphas[i]));
                let next = if i + 1 < n { alphas[i + 1] } else { far };
                deltas.push(next - alphas[i]);
            }
        }
        Self {
            n_rays: rays.len(),
            segments,
            points,
            deltas,
        }
    }
}

/// Tape op: composed samples `[S, 4]` to ray colours `[R, 3]`.
struct VolumeRenderOp<T> {
    segments: Vec<Option<(usize, usize)>>,
    deltas: Vec<T>,
}

impl<T: Real> VolumeRenderOp<T> {
    fn forward(&self, composed: &Tensor<T>) -> Tensor<T> {
        let d = composed.data();
        let mut out = vec![T::zero(); 3 * self.segments.len()];
        for (r, seg) in self.segments.iter().enumerate() {
            let Some((start, count)) = *seg else { continue };
            let sigma: Vec<T> = (start..start + count).map(|i| d[4 * i]).collect();
            let color: Vec<[T; 3]> = (start..start + count)
                .map(|i| [d[4 * i + 1], d[4 * i + 2], d[4 * i + 3]])
                .collect();
            let (c, _, _) = integrate(&sigma, &color, &self.deltas[start..start + count]);
            out[3 * r..3 * r + 3].copy_from_slice(&c);
        }
        Tensor::new(&[self.segments.len(), 3], out).expect("render shape")
    }
}

impl<T: Real> CustomOp<T> for VolumeRenderOp<T> {
    fn name(&self) -> &'static str {
        "volume_render"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Vec<Option<Tensor<T>>> {
        let d = inputs[0].data();
        let mut g_in = vec![T::zero(); d.len()];
        for (r, seg) in self.segments.iter().enumerate() {
            let Some((start, count)) = *seg else { continue };
            let g = &grad_out.data()[3 * r..3 * r + 3];
            // forward pass quantities
            let mut t = T::one();
            let mut w = Vec::with_capacity(count);
            let mut t_next = Vec::with_capacity(count);
            let mut gc = Vec::with_capacity(count);
            for k in 0..count {
                let i = start + k;
                let decay = (-(d[4 * i] * self.deltas[i])).exp();
                w.push(t * (T::one() - decay));
                t *= decay;
                t_next.push(t);
                gc.push(g[0] * d[4 * i + 1] + g[1] * d[4 * i + 2] + g[2] * d[4 * i + 3]);
            }
            // suffix sums of w_i (g . c_i) over i > k
            let mut tail = T::zero();
            for k in (0..count).rev() {
                let i = start + k;
                g_in[4 * i] = self.deltas[i] * (t_next[k] * gc[k] - tail);
                for a in 0..3 {
                    g_in[4 * i + 1 + a] = w[k] * g[a];
                }
                tail += w[k] * gc[k];
            }
        }
        vec![Some(
            Tensor::new(inputs[0].shape(), g_in).expect("render grad shape"),
        )]
    }
}

/// Renders the samples of `rays` from `latents` (`[m, k]`) on the tape,
/// giving `[R, 3]`. Rays without samples are black.
pub fn render_samples_var<T: Real>(
    tape: &Tape<T>,
    store: &ParamStore<T>,
    decoder: &Decoder,
    latents: Var,
    samples: &RaySamples,
) -> Result<Var> {
    if samples.points.is_empty() {
        return Ok(tape.constant(Tensor::zeros(&[samples.n_rays.max(1), 3])?));
    }
    let m = tape.shape(latents)[0];
    let objects: Vec<usize> = (0..m).collect();
    let x = tape.constant(decoder.input_tensor(&samples.points)?);
    let parts = decoder.query_var(tape, store, x, latents, &objects)?;
    let composed = compose_var(tape, &parts);
    Ok(volume_render_var(tape, composed, samples))
}

/// Quadrature of composed samples `[S, 4]` (`sigma, r, g, b`) into ray
/// colours `[R, 3]`.
pub fn volume_render_var<T: Real>(tape: &Tape<T>, composed: Var, samples: &RaySamples) -> Var {
    let op = VolumeRenderOp {
        segments: samples.segments.clone(),
        deltas: samples.deltas.iter().map(|&d| T::lit(d)).collect(),
    };
    let out = op.forward(&tape.value(composed));
    tape.custom(&[composed], out, Rc::new(op))
}

/// Inference rendering of rays with midpoint sampling, in ray chunks.
pub fn render_rays<T: Real>(
    store: &ParamStore<T>,
    decoder: &Decoder,
    latents: &LatentSet<T>,
    rays: &[Ray],
    bounds: &Aabb,
    n_samples: usize,
) -> Result<Vec<[T; 3]>> {
    let mut out = Vec::with_capacity(rays.len());
    for chunk in rays.chunks(256) {
        let tape = Tape::inference();
        let samples = RaySamples::new::<rand::rngs::ThreadRng>(chunk, bounds, n_samples, Sampling::Midpoint);
        let z = tape.constant(latents.tensor().clone());
        let c = render_samples_var(&tape, store, decoder, z, &samples)?;
        let v = tape.value(c);
        out.extend(v.data().chunks_exact(3).take(chunk.len()).map(|p| [p[0], p[1], p[2]]));
    }
    Ok(out)
}

/// Pixel-centre ray for pixel index `row * width + col`.
pub fn pixel_ray(camera: &Camera, pixel: usize) -> Ray {
    let col = pixel % camera.width;
    let row = pixel / camera.width;
    camera.ray(col as f64, row as f64)
}

/// Renders a full view. With `region`, only pixels inside it are rendered;
/// everything else stays black.
pub fn render_image<T: Real>(
    store: &ParamStore<T>,
    decoder: &Decoder,
    latents: &LatentSet<T>,
    camera: &Camera,
    bounds: &Aabb,
    n_samples: usize,
    region: Option<&Mask>,
) -> Result<Image> {
    let pixels: Vec<usize> = match region {
        Some(m) => m.pixels(),
        None => (0..camera.width * camera.height).collect(),
    };
    let rays: Vec<Ray> = pixels.iter().map(|&p| pixel_ray(camera, p)).collect();
    let colors = render_rays(store, decoder, latents, &rays, bounds, n_samples)?;
    let mut img = Image::black(camera.width, camera.height);
    for (&p, c) in pixels.iter().zip(colors) {
        img.set_pixel(
            p % camera.width,
            p / camera.width,
            c.map(|v| v.to_f32().unwrap()),
        );
    }
    Ok(img)
}

/// Union mask `M_tot`, its dilation `M_hat`, and the pixel indices of
/// `M_hat` (the candidate training rays).
pub fn select_training_rays(masks: &[Mask], width: usize, height: usize, dilation_px: usize) -> (Vec<usize>, Mask, Mask) {
    let total = Mask::union(masks, width, height);
    let enlarged = total.dilate(dilation_px);
    (enlarged.pixels(), enlarged, total)
}

/// Number of reconstruction losses evaluated on an empty pixel set.
pub static EMPTY_RAY_SETS: AtomicUsize = AtomicUsize::new(0);

/// Uniform subset of at most `budget` pixels, without replacement.
pub fn sample_pixels<R: Rng + ?Sized>(pixels: &[usize], budget: usize, rng: &mut R) -> Vec<usize> {
    if pixels.len() <= budget {
        return pixels.to_vec();
    }
    rand::seq::index::sample(rng, pixels.len(), budget)
        .into_iter()
        .map(|i| pixels[i])
        .collect()
}

/// Masked squared error: mean over `pixels` of the per-pixel squared RGB
/// distance between the rendering and `I * M_tot`.
pub fn recon_loss_var<T: Real, R: Rng + ?Sized>(
    tape: &Tape<T>,
    store: &ParamStore<T>,
    decoder: &Decoder,
    latents: Var,
    view: &PosedView,
    total_mask: &Mask,
    pixels: &[usize],
    bounds: &Aabb,
    n_samples: usize,
    sampling: Sampling<'_, R>,
) -> Result<Var> {
    if pixels.is_empty() {
        EMPTY_RAY_SETS.fetch_add(1, Ordering::Relaxed);
        log::warn!("reconstruction loss on an empty pixel set");
        return Ok(tape.constant(Tensor::scalar(T::zero())));
    }
    let rays: Vec<Ray> = pixels.iter().map(|&p| pixel_ray(&view.camera, p)).collect();
    let samples = RaySamples::new(&rays, bounds, n_samples, sampling);
    let rendered = render_samples_var(tape, store, decoder, latents, &samples)?;
    let w = view.image.width;
    let mut target = Vec::with_capacity(3 * pixels.len());
    for &p in pixels {
        let (c, r) = (p % w, p / w);
        let rgb = if total_mask.get(c, r) {
            view.image.pixel(c, r)
        } else {
            [0.0; 3]
        };
        target.extend(rgb.iter().map(|&v| T::lit(v as f64)));
    }
    let target = tape.constant(Tensor::new(&[pixels.len(), 3], target)?);
    let diff = tape.sub(rendered, target)?;
    let sq = tape.sum(tape.mul(diff, diff)?);
    Ok(tape.scale(sq, T::one() / T::from_usize(pixels.len()).unwrap()))
}

/// Same loss on plain images: mean over `pixels` of squared RGB distance.
pub fn masked_mse(rendered: &Image, target: &Image, pixels: &[usize]) -> f64 {
    if pixels.is_empty() {
        return 0.0;
    }
    let w = target.width;
    let mut acc = 0.0;
    for &p in pixels {
        let (c, r) = (p % w, p / w);
        let a = rendered.pixel(c, r);
        let b = target.pixel(c, r);
        acc += (0..3).map(|i| ((a[i] - b[i]) as f64).powi(2)).sum::<f64>();
    }
    acc / pixels.len() as f64
}
