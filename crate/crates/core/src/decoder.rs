//! Conditional NeRF `f(x, z)` and the density-derived geometric queries.

use cdyn_autodiff::{Init, Linear, Mlp, ParamId, ParamStore, Real, Tape, Tensor, Var};
use rand::Rng;

use crate::config::ModelConfig;
use crate::error::{CoreError, Result};
use crate::geometry::{Vec3, WorkspaceGrid};
use crate::latent::LatentSet;

/// `f(x, z) -> (sigma, c)`.
///
/// The first hidden layer acts on `concat(lift(x), z)`; it is stored as two
/// blocks so the `z` part is computed once per object and broadcast.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    lift: Mlp,
    first_x: Linear,
    first_z: Linear,
    trunk: Vec<Linear>,
    sigma_head: Linear,
    color_head: Linear,
    fourier_octaves: usize,
    density_scale: f64,
    ws_min: Vec3,
    ws_extent: Vec3,
    latent_dim: usize,
}

/// Per-object density and colour at a batch of points.
#[derive(Clone, Copy, Debug)]
pub struct RadianceVars {
    /// `[n, 1]`
    pub sigma: Var,
    /// `[n, 3]`
    pub color: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Radiance<T> {
    pub sigma: Vec<T>,
    pub color: Vec<[T; 3]>,
}

impl Decoder {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let in_dim = 3 * (1 + 2 * cfg.fourier_octaves);
        let lift = Mlp::new(store, "nerf.lift", &[in_dim, cfg.nerf_lift, cfg.nerf_lift], rng);
        let h = cfg.nerf_hidden;
        let first_x = Linear::new(store, "nerf.first_x", cfg.nerf_lift, h, true, Init::He, rng);
        let first_z = Linear::new(store, "nerf.first_z", cfg.latent_dim, h, false, Init::He, rng);
        let trunk = (1..cfg.nerf_layers)
            .map(|i| Linear::new(store, &format!("nerf.trunk{i}"), h, h, true, Init::He, rng))
            .collect();
        let sigma_head = Linear::new(store, "nerf.sigma", h, 1, true, Init::Glorot, rng);
        let color_head = Linear::new(store, "nerf.color", h, 3, true, Init::Glorot, rng);
        let ws = cfg.workspace();
        Self {
            lift,
            first_x,
            first_z,
            trunk,
            sigma_head,
            color_head,
            fourier_octaves: cfg.fourier_octaves,
            density_scale: cfg.density_scale,
            ws_min: ws.min,
            ws_extent: ws.extent(),
            latent_dim: cfg.latent_dim,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.lift.params();
        p.extend(self.first_x.params());
        p.extend(self.first_z.params());
        for l in &self.trunk {
            p.extend(l.params());
        }
        p.extend(self.sigma_head.params());
        p.extend(self.color_head.params());
        p
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Network input for world points: coordinates mapped to `[-1, 1]` over
    /// the workspace, optionally followed by Fourier features.
    pub fn input_tensor<T: Real>(&self, points: &[Vec3]) -> Result<Tensor<T>> {
        let width = 3 * (1 + 2 * self.fourier_octaves);
        let mut data = Vec::with_capacity(points.len() * width);
        for p in points {
            let n: [f64; 3] =
                std::array::from_fn(|a| 2.0 * (p[a] - self.ws_min[a]) / self.ws_extent[a] - 1.0);
            data.extend(n.iter().map(|&v| T::lit(v)));
            for o in 0..self.fourier_octaves {
                let f = std::f64::consts::PI * (1u64 << o) as f64;
                data.extend(n.iter().map(|&v| T::lit((f * v).sin())));
                data.extend(n.iter().map(|&v| T::lit((f * v).cos())));
            }
        }
        Ok(Tensor::new(&[points.len(), width], data)?)
    }

    /// Evaluates `f` at `x` (`[n, in]`) for every listed object row of
    /// `latents` (`[m, k]`).
    pub fn query_var<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        latents: Var,
        objects: &[usize],
    ) -> Result<Vec<RadianceVars>> {
        let lifted = self.lift.forward_relu(tape, store, x)?;
        let lx = self.first_x.forward(tape, store, lifted)?;
        let zp = self.first_z.forward(tape, store, latents)?;
        let mut out = Vec::with_capacity(objects.len());
        for &j in objects {
            let zj = tape.gather_rows(zp, &[j])?;
            let mut h = tape.relu(tape.add_row(lx, zj)?);
            for layer in &self.trunk {
                h = tape.relu(layer.forward(tape, store, h)?);
            }
            let raw_sigma = self.sigma_head.forward(tape, store, h)?;
            let sigma = tape.scale(tape.softplus(raw_sigma), T::lit(self.density_scale));
            let color = tape.sigmoid(self.color_head.forward(tape, store, h)?);
            out.push(RadianceVars { sigma, color });
        }
        Ok(out)
    }

    /// Inference evaluation at world points for every object, in chunks.
    pub fn query<T: Real>(
        &self,
        store: &ParamStore<T>,
        points: &[Vec3],
        latents: &LatentSet<T>,
        chunk: usize,
    ) -> Result<Vec<Radiance<T>>> {
        let m = latents.len();
        let mut out: Vec<Radiance<T>> = (0..m)
            .map(|_| Radiance {
                sigma: Vec::with_capacity(points.len()),
                color: Vec::with_capacity(points.len()),
            })
            .collect();
        let objects: Vec<usize> = (0..m).collect();
        for block in points.chunks(chunk.max(1)) {
            let tape = Tape::inference();
            let x = tape.constant(self.input_tensor(block)?);
            let z = tape.constant(latents.tensor().clone());
            let rad = self.query_var(&tape, store, x, z, &objects)?;
            for (o, r) in out.iter_mut().zip(rad) {
                o.sigma.extend_from_slice(tape.value(r.sigma).data());
                let c = tape.value(r.color);
                o.color
                    .extend(c.data().chunks_exact(3).map(|v| [v[0], v[1], v[2]]));
            }
        }
        Ok(out)
    }

    /// Density of every object at every voxel centre.
    pub fn grid_radiance<T: Real>(
        &self,
        store: &ParamStore<T>,
        grid: &WorkspaceGrid,
        latents: &LatentSet<T>,
    ) -> Result<Vec<Radiance<T>>> {
        self.query(store, grid.centers(), latents, 4096)
    }
}

/// Binary voxel grid over the workspace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Occupancy {
    pub dims: [usize; 3],
    data: Vec<bool>,
}

impl Occupancy {
    pub fn new(dims: [usize; 3], data: Vec<bool>) -> Self {
        assert_eq!(data.len(), dims.iter().product::<usize>(), "occupancy size");
        Self { dims, data }
    }

    pub fn from_density<T: Real>(dims: [usize; 3], sigma: &[T], kappa: f64) -> Self {
        let k = T::lit(kappa);
        Self::new(dims, sigma.iter().map(|&s| s > k).collect())
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, iz: usize, iy: usize, ix: usize) -> bool {
        self.data[(iz * self.dims[1] + iy) * self.dims[2] + ix]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Dilation by a cube of ones with half-width `r` (separable max filter).
    pub fn dilate(&self, r: usize) -> Occupancy {
        if r == 0 {
            return self.clone();
        }
        let [d, h, w] = self.dims;
        let mut cur = self.data.clone();
        let strides = [h * w, w, 1];
        for axis in 0..3 {
            let n = self.dims[axis];
            let s = strides[axis];
            let mut next = vec![false; cur.len()];
            for (i, out) in next.iter_mut().enumerate() {
                let pos = (i / s) % n;
                let base = i - pos * s;
                let lo = pos.saturating_sub(r);
                let hi = (pos + r).min(n - 1);
                *out = (lo..=hi).any(|p| cur[base + p * s]);
            }
            cur = next;
        }
        debug_assert_eq!(cur.len(), d * h * w);
        Occupancy {
            dims: self.dims,
            data: cur,
        }
    }

    pub fn intersects(&self, other: &Occupancy) -> bool {
        self.data.iter().zip(&other.data).any(|(&a, &b)| a && b)
    }
}

/// Binary `m x m` interaction matrix; `A_ij = 1` means `i` is influenced by `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Adjacency {
    m: usize,
    data: Vec<bool>,
}

impl Adjacency {
    pub fn zeros(m: usize) -> Self {
        Self {
            m,
            data: vec![false; m * m],
        }
    }

    /// Every pair connected except self-loops.
    pub fn dense(m: usize) -> Self {
        let mut a = Self::zeros(m);
        for i in 0..m {
            for j in 0..m {
                a.data[i * m + j] = i != j;
            }
        }
        a
    }

    pub fn from_fn(m: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut a = Self::zeros(m);
        for i in 0..m {
            for j in 0..m {
                a.data[i * m + j] = i != j && f(i, j);
            }
        }
        a
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.m + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[i * self.m + j] = v;
    }

    pub fn row_is_empty(&self, i: usize) -> bool {
        !self.data[i * self.m..(i + 1) * self.m].iter().any(|&b| b)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.m).all(|i| (0..self.m).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn has_zero_diagonal(&self) -> bool {
        (0..self.m).all(|i| !self.get(i, i))
    }

    pub fn edge_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Block-diagonal union of several graphs.
    pub fn block_diag(blocks: &[Adjacency]) -> Adjacency {
        let m = blocks.iter().map(|b| b.m).sum();
        let mut out = Adjacency::zeros(m);
        let mut off = 0;
        for b in blocks {
            for i in 0..b.m {
                for j in 0..b.m {
                    out.set(off + i, off + j, b.get(i, j));
                }
            }
            off += b.m;
        }
        out
    }

    pub fn permuted(&self, perm: &[usize]) -> Adjacency {
        Adjacency::from_fn(self.m, |i, j| self.get(perm[i], perm[j]))
    }
}

/// `A_ij = 1` iff the dilated occupancies of `i` and `j` share a voxel.
pub fn collision_adjacency(occupancies: &[Occupancy], dilation: usize) -> Adjacency {
    let dilated: Vec<Occupancy> = occupancies.iter().map(|o| o.dilate(dilation)).collect();
    let m = dilated.len();
    let mut a = Adjacency::zeros(m);
    for i in 0..m {
        for j in i + 1..m {
            if dilated[i].intersects(&dilated[j]) {
                a.set(i, j, true);
                a.set(j, i, true);
            }
        }
    }
    a
}

/// Mean voxel centre of the occupied set, or `None` when it is empty.
pub fn center_of_mass(occupancy: &Occupancy, grid: &WorkspaceGrid) -> Option<Vec3> {
    let mut acc = Vec3::zeros();
    let mut n = 0usize;
    for (c, &on) in grid.centers().iter().zip(occupancy.data()) {
        if on {
            acc += c;
            n += 1;
        }
    }
    (n > 0).then(|| acc / n as f64)
}

/// Mean decoded colour over occupied voxels.
pub fn mean_color<T: Real>(occupancy: &Occupancy, color: &[[T; 3]]) -> Option<[f64; 3]> {
    let mut acc = [0.0; 3];
    let mut n = 0usize;
    for (c, &on) in color.iter().zip(occupancy.data()) {
        if on {
            for a in 0..3 {
                acc[a] += c[a].to_f64().unwrap();
            }
            n += 1;
        }
    }
    (n > 0).then(|| acc.map(|v| v / n as f64))
}

/// Occupancy, centre of mass and colour of each object, decoded once.
#[derive(Clone, Debug)]
pub struct ObjectGeometry {
    pub occupancy: Vec<Occupancy>,
    pub com: Vec<Option<Vec3>>,
    pub color: Vec<Option<[f64; 3]>>,
}

impl ObjectGeometry {
    pub fn decode<T: Real>(
        decoder: &Decoder,
        store: &ParamStore<T>,
        grid: &WorkspaceGrid,
        latents: &LatentSet<T>,
        kappa: f64,
    ) -> Result<Self> {
        let rad = decoder.grid_radiance(store, grid, latents)?;
        let occupancy: Vec<Occupancy> = rad
            .iter()
            .map(|r| Occupancy::from_density(grid.dims, &r.sigma, kappa))
            .collect();
        let com = occupancy.iter().map(|o| center_of_mass(o, grid)).collect();
        let color = occupancy
            .iter()
            .zip(&rad)
            .map(|(o, r)| mean_color(o, &r.color))
            .collect();
        Ok(Self {
            occupancy,
            com,
            color,
        })
    }

    pub fn com_of(&self, j: usize) -> Result<Vec3> {
        self.com[j].ok_or(CoreError::VanishedObject(j))
    }
}
