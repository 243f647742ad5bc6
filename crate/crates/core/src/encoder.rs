//! Implicit object encoder: pixel-aligned features `E`, the mask-gated view
//! average `y_j` and the volumetric encoder `Phi`.

use std::rc::Rc;

use cdyn_autodiff::{Init, Linear, Mlp, ParamId, ParamStore, Real, SparseRows, Tape, Tensor, Var};
use rand::Rng;

use crate::config::ModelConfig;
use crate::error::{CoreError, Result};
use crate::geometry::{CamCoord, Camera, RigidTransform, Vec3, WorkspaceGrid};
use crate::image::{check_views, Image, PosedView};
use crate::latent::LatentSet;

const CONV_KERNEL: usize = 3;
const CONV_PADDING: usize = 1;

#[derive(Clone, Debug, PartialEq)]
struct ConvLayer {
    kernel: ParamId,
    bias: ParamId,
    stride: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    coord: Linear,
    feature: Mlp,
    convs: Vec<ConvLayer>,
    dense: Mlp,
    grid_dims: [usize; 3],
    feature_dim: usize,
    latent_dim: usize,
    chunk_rows: usize,
    depth_scale: f64,
}

fn conv_extent(n: usize, stride: usize) -> usize {
    (n + 2 * CONV_PADDING - CONV_KERNEL) / stride + 1
}

/// Per-view rows of the feature encoder for one set of query points.
#[derive(Clone, Debug)]
struct ViewRows<T> {
    uv: Vec<[T; 2]>,
    /// Normalized `(u, v, d)` per row, flattened.
    coords: Vec<T>,
}

/// Which (point, view) pairs are evaluated by `E` and how they average into
/// each object's feature function.
#[derive(Clone, Debug)]
pub struct FeatureLayout<T> {
    n_points: usize,
    views: Vec<ViewRows<T>>,
    rows: usize,
    objects: Vec<Option<Rc<SparseRows<T>>>>,
}

impl<T: Real> FeatureLayout<T> {
    /// Projects `points` into every view and records, for each object in
    /// `objects`, the views whose mask contains the point's nearest pixel
    /// (with positive depth).
    pub fn new(views: &[PosedView], objects: &[usize], points: &[Vec3], depth_scale: f64) -> Self {
        let mut per_object: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); points.len()]; objects.len()];
        let mut view_rows = Vec::with_capacity(views.len());
        let mut rows = 0usize;
        for view in views {
            let cam = &view.camera;
            let mut uv = Vec::new();
            let mut coords = Vec::new();
            for (p, x) in points.iter().enumerate() {
                let c = cam.project(x);
                let Some((col, row)) = cam.pixel_of(&c) else { continue };
                let mut used = false;
                for (slot, &j) in objects.iter().enumerate() {
                    if view.masks[j].get(col, row) {
                        per_object[slot][p].push(rows);
                        used = true;
                    }
                }
                if used {
                    uv.push([T::lit(c.u), T::lit(c.v)]);
                    coords.extend(normalized_coords(cam, &c, depth_scale).map(T::lit));
                    rows += 1;
                }
            }
            view_rows.push(ViewRows { uv, coords });
        }
        let objects = per_object
            .into_iter()
            .map(|lists| {
                if lists.iter().all(Vec::is_empty) {
                    return None;
                }
                let sparse = lists
                    .into_iter()
                    .map(|l| {
                        let w = T::one() / T::from_usize(l.len().max(1)).unwrap();
                        l.into_iter().map(|r| (r, w)).collect()
                    })
                    .collect();
                Some(Rc::new(SparseRows::new(sparse, rows)))
            })
            .collect();
        Self {
            n_points: points.len(),
            views: view_rows,
            rows,
            objects,
        }
    }

    /// Number of `(point, view)` rows fed to `E`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of views in which object slot `slot` sees point `p`.
    pub fn visibility(&self, slot: usize, p: usize) -> usize {
        self.objects[slot]
            .as_ref()
            .map_or(0, |s| s.rows()[p].len())
    }
}

fn normalized_coords(cam: &Camera, c: &CamCoord, depth_scale: f64) -> [f64; 3] {
    let nu = 2.0 * c.u / (cam.width.max(2) - 1) as f64 - 1.0;
    let nv = 2.0 * c.v / (cam.height.max(2) - 1) as f64 - 1.0;
    [nu, nv, c.d / depth_scale]
}

fn image_tensor<T: Real>(img: &Image) -> Tensor<T> {
    Tensor::new(
        &[3, img.height, img.width],
        img.planar().iter().map(|&v| T::lit(v as f64)).collect(),
    )
    .expect("image extent")
}

impl Encoder {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        cfg: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let coord = Linear::new(store, "enc.coord", 3, cfg.coord_width, true, Init::He, rng);
        let mut widths = vec![cfg.coord_width + 3];
        widths.extend(std::iter::repeat(cfg.feature_hidden).take(cfg.feature_layers));
        widths.push(cfg.feature_dim);
        let feature = Mlp::new(store, "enc.feature", &widths, rng);

        let mut convs = Vec::new();
        let mut c_in = cfg.feature_dim;
        let mut dims = cfg.grid_dims;
        for (i, &stride) in cfg.conv_strides.iter().enumerate() {
            let c_out = cfg.conv_channels;
            let fan_in = c_in * CONV_KERNEL.pow(3);
            let k = cdyn_autodiff::nn::init_tensor(
                rng,
                &[c_out, c_in, CONV_KERNEL, CONV_KERNEL, CONV_KERNEL],
                fan_in,
                c_out * CONV_KERNEL.pow(3),
                Init::He,
            );
            let kernel = store.add(format!("enc.phi.conv{i}.kernel"), k);
            let bias = store.add(
                format!("enc.phi.conv{i}.bias"),
                Tensor::zeros(&[c_out]).expect("bias shape"),
            );
            convs.push(ConvLayer {
                kernel,
                bias,
                stride,
            });
            c_in = c_out;
            dims = dims.map(|n| conv_extent(n, stride));
        }
        let flat = c_in * dims.iter().product::<usize>();
        let mut widths = vec![flat];
        widths.extend(std::iter::repeat(cfg.phi_hidden).take(cfg.phi_layers));
        widths.push(cfg.latent_dim);
        let dense = Mlp::new(store, "enc.phi.dense", &widths, rng);
        Self {
            coord,
            feature,
            convs,
            dense,
            grid_dims: cfg.grid_dims,
            feature_dim: cfg.feature_dim,
            latent_dim: cfg.latent_dim,
            chunk_rows: cfg.chunk_rows,
            depth_scale: cfg.workspace().diagonal(),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.coord.params();
        p.extend(self.feature.params());
        for c in &self.convs {
            p.push(c.kernel);
            p.push(c.bias);
        }
        p.extend(self.dense.params());
        p
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn depth_scale(&self) -> f64 {
        self.depth_scale
    }

    pub fn set_chunk_rows(&mut self, rows: usize) {
        self.chunk_rows = rows.max(1);
    }

    fn check_grid(&self, grid: &WorkspaceGrid) -> Result<()> {
        if grid.dims != self.grid_dims {
            return Err(CoreError::GridMismatch {
                grid: grid.dims,
                expected: self.grid_dims,
            });
        }
        Ok(())
    }

    /// `E` on a batch: `coords` are normalized camera coordinates `[n, 3]`,
    /// `rgb` the sampled colours `[n, 3]`.
    fn feature_rows<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        coords: Var,
        rgb: Var,
    ) -> Result<Var> {
        let c = tape.relu(self.coord.forward(tape, store, coords)?);
        let h = tape.concat_cols(&[c, rgb])?;
        Ok(self.feature.forward(tape, store, h)?)
    }

    /// Single evaluation of `E(I, K(x))`; zero when the point is behind the
    /// camera.
    pub fn feature<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        image: &Image,
        camera: &Camera,
        cam: CamCoord,
    ) -> Result<Var> {
        if !cam.in_front() {
            return Ok(tape.constant(Tensor::zeros(&[1, self.feature_dim])?));
        }
        let img = tape.constant(image_tensor(image));
        let rgb = tape.bilinear_sample(img, Rc::new(vec![[T::lit(cam.u), T::lit(cam.v)]]))?;
        let coords = normalized_coords(camera, &cam, self.depth_scale).map(T::lit).to_vec();
        let coords = tape.constant(Tensor::new(&[1, 3], coords)?);
        self.feature_rows(tape, store, coords, rgb)
    }

    /// `E` for every row of `layout`, `[rows, n_o]`; `None` when no row exists.
    pub fn layout_features<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        views: &[PosedView],
        layout: &FeatureLayout<T>,
    ) -> Result<Option<Var>> {
        let mut parts = Vec::new();
        for (view, rows) in views.iter().zip(&layout.views) {
            let n = rows.uv.len();
            if n == 0 {
                continue;
            }
            let img = tape.constant(image_tensor(&view.image));
            let mut start = 0;
            while start < n {
                let end = (start + self.chunk_rows).min(n);
                let uv = Rc::new(rows.uv[start..end].to_vec());
                let rgb = tape.bilinear_sample(img, uv)?;
                let coords = tape.constant(Tensor::new(
                    &[end - start, 3],
                    rows.coords[3 * start..3 * end].to_vec(),
                )?);
                parts.push(self.feature_rows(tape, store, coords, rgb)?);
                start = end;
            }
        }
        match parts.len() {
            0 => Ok(None),
            1 => Ok(Some(parts[0])),
            _ => Ok(Some(tape.concat_rows(&parts)?)),
        }
    }

    /// `y_j` on the layout's points for object slot `slot`, `[n_points, n_o]`.
    pub fn object_features<T: Real>(
        &self,
        tape: &Tape<T>,
        features: Option<Var>,
        layout: &FeatureLayout<T>,
        slot: usize,
    ) -> Result<Var> {
        match (&layout.objects[slot], features) {
            (Some(agg), Some(f)) => Ok(tape.sparse_rows(f, Rc::clone(agg))?),
            _ => Ok(tape.constant(Tensor::zeros(&[layout.n_points, self.feature_dim])?)),
        }
    }

    /// `Phi`: feature grid `[n_voxels, n_o]` to a latent row `[1, k]`.
    pub fn phi<T: Real>(&self, tape: &Tape<T>, store: &ParamStore<T>, y: Var) -> Result<Var> {
        let [d, h, w] = self.grid_dims;
        let mut x = tape.reshape(tape.transpose(y)?, &[self.feature_dim, d, h, w])?;
        for layer in &self.convs {
            let k = tape.param(store, layer.kernel);
            let out = tape.conv3d(x, k, layer.stride, CONV_PADDING)?;
            let shape = tape.shape(out);
            let flat = tape.reshape(out, &[shape[0], shape[1..].iter().product()])?;
            let biased = tape.add_col(flat, tape.param(store, layer.bias))?;
            x = tape.reshape(tape.relu(biased), &shape)?;
        }
        let n = tape.shape(x).iter().product();
        let flat = tape.reshape(x, &[1, n])?;
        Ok(self.dense.forward(tape, store, flat)?)
    }

    /// `Omega`: one latent row per object, stacked to `[m, k]`.
    pub fn encode_scene_var<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        views: &[PosedView],
        grid: &WorkspaceGrid,
    ) -> Result<Var> {
        let m = check_views(views)?;
        self.check_grid(grid)?;
        let objects: Vec<usize> = (0..m).collect();
        let layout = FeatureLayout::new(views, &objects, grid.centers(), self.depth_scale);
        let features = self.layout_features(tape, store, views, &layout)?;
        let mut latents = Vec::with_capacity(m);
        for slot in 0..m {
            let y = self.object_features(tape, features, &layout, slot)?;
            latents.push(self.phi(tape, store, y)?);
        }
        if latents.len() == 1 {
            return Ok(latents[0]);
        }
        Ok(tape.concat_rows(&latents)?)
    }

    pub fn encode_scene<T: Real>(
        &self,
        store: &ParamStore<T>,
        views: &[PosedView],
        grid: &WorkspaceGrid,
    ) -> Result<LatentSet<T>> {
        let tape = Tape::inference();
        let z = self.encode_scene_var(&tape, store, views, grid)?;
        let value = (*tape.value(z)).clone();
        LatentSet::from_tensor(value)
    }

    /// `T(q)[z_j]`: object `j` re-encoded on the grid pulled back through `q`.
    pub fn transform_latent_var<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        views: &[PosedView],
        object: usize,
        grid: &WorkspaceGrid,
        q: &RigidTransform,
    ) -> Result<Var> {
        let m = check_views(views)?;
        self.check_grid(grid)?;
        if object >= m {
            return Err(CoreError::ArticulatedIndex { index: object, m });
        }
        let points = grid.pulled_back(q);
        let layout = FeatureLayout::new(views, &[object], &points, self.depth_scale);
        let features = self.layout_features(tape, store, views, &layout)?;
        let y = self.object_features(tape, features, &layout, 0)?;
        self.phi(tape, store, y)
    }

    pub fn transform_latent<T: Real>(
        &self,
        store: &ParamStore<T>,
        views: &[PosedView],
        object: usize,
        grid: &WorkspaceGrid,
        q: &RigidTransform,
    ) -> Result<Vec<T>> {
        let tape = Tape::inference();
        let z = self.transform_latent_var(&tape, store, views, object, grid, q)?;
        let out = tape.value(z).data().to_vec();
        Ok(out)
    }

    /// `y_j(x)` for arbitrary points (inference).
    pub fn object_feature_at<T: Real>(
        &self,
        store: &ParamStore<T>,
        views: &[PosedView],
        object: usize,
        points: &[Vec3],
    ) -> Result<Tensor<T>> {
        let tape = Tape::inference();
        let layout = FeatureLayout::new(views, &[object], points, self.depth_scale);
        let features = self.layout_features(&tape, store, views, &layout)?;
        let y = self.object_features(&tape, features, &layout, 0)?;
        let out = (*tape.value(y)).clone();
        Ok(out)
    }
}
