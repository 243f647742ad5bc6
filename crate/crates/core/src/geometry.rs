//! Cameras, rays, axis-aligned boxes, rigid transforms and the voxelized
//! workspace.

use nalgebra::{Isometry3, Matrix3, Matrix3x4, Quaternion, Translation3, UnitQuaternion, Vector3};

use crate::error::{CoreError, Result};

pub type Vec3 = Vector3<f64>;

/// Projected camera coordinates: pixel position and depth along the optical
/// axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CamCoord {
    pub u: f64,
    pub v: f64,
    pub d: f64,
}

impl CamCoord {
    pub fn in_front(&self) -> bool {
        self.d > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub dir: Vec3,
}

impl Ray {
    pub fn at(&self, alpha: f64) -> Vec3 {
        self.origin + self.dir * alpha
    }
}

/// Pinhole camera `P = K [R | t]` over a `width x height` image.
///
/// Pixel centres sit on integer coordinates, `u` along columns and `v` along
/// rows. The matrix is rescaled on construction so that the third row of its
/// left block is a unit vector with `det > 0`; the third homogeneous
/// coordinate of a projection is then the depth along the optical axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    p: Matrix3x4<f64>,
    m_inv: Matrix3<f64>,
    center: Vec3,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn from_matrix(p: Matrix3x4<f64>, width: usize, height: usize) -> Result<Self> {
        let m = p.fixed_view::<3, 3>(0, 0).into_owned();
        let det = m.determinant();
        let row_norm = m.row(2).norm();
        if !det.is_finite() || det.abs() < 1e-12 || row_norm < 1e-12 {
            return Err(CoreError::SingularCamera);
        }
        let p = p * (det.signum() / row_norm);
        let m = p.fixed_view::<3, 3>(0, 0).into_owned();
        let m_inv = m.try_inverse().ok_or(CoreError::SingularCamera)?;
        let center = -(m_inv * p.column(3));
        Ok(Self {
            p,
            m_inv,
            center,
            width,
            height,
        })
    }

    /// Camera at `eye` looking at `target`, with `up` roughly pointing up in
    /// the image (x right, y down, z forward).
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        intrinsics: Intrinsics,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(CoreError::SingularCamera);
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * eye);
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        rt.set_column(3, &t);
        Self::from_matrix(intrinsics.matrix() * rt, width, height)
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.p
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn project(&self, x: &Vec3) -> CamCoord {
        let h = self.p * x.push(1.0);
        CamCoord {
            u: h.x / h.z,
            v: h.y / h.z,
            d: h.z,
        }
    }

    /// Ray through the pixel coordinate `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Ray {
        let dir = (self.m_inv * Vec3::new(u, v, 1.0)).normalize();
        Ray {
            origin: self.center,
            dir,
        }
    }

    /// Nearest pixel `(col, row)` of a projection, if it lands in the image.
    pub fn pixel_of(&self, c: &CamCoord) -> Option<(usize, usize)> {
        if !c.in_front() || !c.u.is_finite() || !c.v.is_finite() {
            return None;
        }
        let col = c.u.round();
        let row = c.v.round();
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return None;
        }
        Some((col as usize, row as usize))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (0..3).all(|a| x[a] >= self.min[a] && x[a] <= self.max[a])
    }

    /// Slab-method intersection of a ray with the box, clipped to
    /// `alpha >= 0`. Returns `(near, far)` or `None` on a miss.
    pub fn ray_bounds(&self, ray: &Ray) -> Option<(f64, f64)> {
        let mut near = 0.0f64;
        let mut far = f64::INFINITY;
        for a in 0..3 {
            let o = ray.origin[a];
            let d = ray.dir[a];
            if d == 0.0 {
                if o < self.min[a] || o > self.max[a] {
                    return None;
                }
                continue;
            }
            let t0 = (self.min[a] - o) / d;
            let t1 = (self.max[a] - o) / d;
            let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            near = near.max(t0);
            far = far.min(t1);
            if near > far {
                return None;
            }
        }
        Some((near, far))
    }
}

/// Rigid motion `x -> R x + s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform(Isometry3<f64>);

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self(Isometry3::identity())
    }

    /// From `q = [sx, sy, sz, qw, qx, qy, qz]`. The quaternion must be unit
    /// length within 1e-6.
    pub fn from_q7(q: [f64; 7]) -> Result<Self> {
        let quat = Quaternion::new(q[3], q[4], q[5], q[6]);
        let norm = quat.norm();
        if (norm - 1.0).abs() > 1e-6 || !norm.is_finite() {
            return Err(CoreError::NonUnitQuaternion { norm });
        }
        Ok(Self(Isometry3::from_parts(
            Translation3::new(q[0], q[1], q[2]),
            UnitQuaternion::new_normalize(quat),
        )))
    }

    pub fn translation(s: Vec3) -> Self {
        Self(Isometry3::translation(s.x, s.y, s.z))
    }

    /// Planar motion: translation in the table plane plus rotation about z.
    pub fn planar(dx: f64, dy: f64, yaw: f64) -> Self {
        Self(Isometry3::new(Vector3::new(dx, dy, 0.0), Vector3::new(0.0, 0.0, yaw)))
    }

    pub fn to_q7(&self) -> [f64; 7] {
        let t = self.0.translation.vector;
        let q = self.0.rotation.quaternion();
        [t.x, t.y, t.z, q.w, q.i, q.j, q.k]
    }

    pub fn translation_part(&self) -> Vec3 {
        self.0.translation.vector
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.0.rotation.to_rotation_matrix().into_inner()
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.0.transform_point(&(*x).into()).coords
    }

    /// `R^T (x - s)`: the point that this transform carries onto `x`.
    pub fn pull_back(&self, x: &Vec3) -> Vec3 {
        self.0.inverse_transform_point(&(*x).into()).coords
    }

    /// `self` followed by `next`: `R = R2 R1`, `s = R2 s1 + s2`.
    pub fn then(&self, next: &RigidTransform) -> RigidTransform {
        RigidTransform(next.0 * self.0)
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

/// Axis-aligned workspace box and its voxel discretization.
///
/// `dims = [d, h, w]` counts voxels along z, y and x; voxel `(iz, iy, ix)`
/// has flat index `(iz * h + iy) * w + ix`.
#[derive(Clone, Debug, PartialEq)]
pub struct WorkspaceGrid {
    pub bounds: Aabb,
    pub dims: [usize; 3],
    centers: Vec<Vec3>,
}

impl WorkspaceGrid {
    pub fn new(bounds: Aabb, dims: [usize; 3]) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(CoreError::Config(format!("grid extent {dims:?} must be positive")));
        }
        let e = bounds.extent();
        if (0..3).any(|a| !(e[a] > 0.0)) {
            return Err(CoreError::Config("workspace box must have positive volume".into()));
        }
        let [d, h, w] = dims;
        let step = Vec3::new(e.x / w as f64, e.y / h as f64, e.z / d as f64);
        let mut centers = Vec::with_capacity(d * h * w);
        for iz in 0..d {
            for iy in 0..h {
                for ix in 0..w {
                    centers.push(
                        bounds.min
                            + Vec3::new(
                                (ix as f64 + 0.5) * step.x,
                                (iy as f64 + 0.5) * step.y,
                                (iz as f64 + 0.5) * step.z,
                            ),
                    );
                }
            }
        }
        Ok(Self {
            bounds,
            dims,
            centers,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[Vec3] {
        &self.centers
    }

    pub fn index(&self, iz: usize, iy: usize, ix: usize) -> usize {
        (iz * self.dims[1] + iy) * self.dims[2] + ix
    }

    /// Edge lengths of one voxel as `(x, y, z)`.
    pub fn voxel_size(&self) -> Vec3 {
        let e = self.bounds.extent();
        Vec3::new(
            e.x / self.dims[2] as f64,
            e.y / self.dims[1] as f64,
            e.z / self.dims[0] as f64,
        )
    }

    pub fn voxel_volume(&self) -> f64 {
        let s = self.voxel_size();
        s.x * s.y * s.z
    }

    /// Voxel centres pulled back through `q`: `R(q)^T (x - s(q))`.
    pub fn pulled_back(&self, q: &RigidTransform) -> Vec<Vec3> {
        if q.is_identity() {
            return self.centers.clone();
        }
        self.centers.iter().map(|x| q.pull_back(x)).collect()
    }
}
