//! Planar footprints and their penetration tests.

use nalgebra::Vector2;

pub type Vec2 = Vector2<f64>;

/// Footprint of an object on the table plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Footprint {
    /// Oriented rectangle with half extents along its local axes.
    Rect { center: Vec2, half: Vec2, yaw: f64 },
    Circle { center: Vec2, radius: f64 },
}

/// Overlap between two footprints `a` and `b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contact {
    /// Unit direction along which `b` must move to separate from `a`.
    pub normal: Vec2,
    pub depth: f64,
    /// Point on the boundary of the contact region, used for lever arms.
    pub point: Vec2,
}

fn axes(yaw: f64) -> [Vec2; 2] {
    let (s, c) = yaw.sin_cos();
    [Vec2::new(c, s), Vec2::new(-s, c)]
}

impl Footprint {
    pub fn center(&self) -> Vec2 {
        match *self {
            Footprint::Rect { center, .. } | Footprint::Circle { center, .. } => center,
        }
    }

    pub fn corners(&self) -> Option<[Vec2; 4]> {
        match *self {
            Footprint::Rect { center, half, yaw } => {
                let [ax, ay] = axes(yaw);
                let (ex, ey) = (ax * half.x, ay * half.y);
                Some([center + ex + ey, center - ex + ey, center - ex - ey, center + ex - ey])
            }
            Footprint::Circle { .. } => None,
        }
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        match *self {
            Footprint::Circle { center, radius } => {
                let r = Vec2::repeat(radius);
                (center - r, center + r)
            }
            Footprint::Rect { .. } => {
                let c = self.corners().unwrap();
                let mut lo = c[0];
                let mut hi = c[0];
                for p in &c[1..] {
                    lo = lo.inf(p);
                    hi = hi.sup(p);
                }
                (lo, hi)
            }
        }
    }

    /// Radius of the smallest centred disc containing the footprint.
    pub fn circumradius(&self) -> f64 {
        match *self {
            Footprint::Rect { half, .. } => half.norm(),
            Footprint::Circle { radius, .. } => radius,
        }
    }

    /// Copy grown by `margin` on every side.
    pub fn inflated(&self, margin: f64) -> Footprint {
        match *self {
            Footprint::Rect { center, half, yaw } => Footprint::Rect {
                center,
                half: half.add_scalar(margin),
                yaw,
            },
            Footprint::Circle { center, radius } => Footprint::Circle {
                center,
                radius: radius + margin,
            },
        }
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        match *self {
            Footprint::Circle { center, radius } => (p - center).norm() <= radius,
            Footprint::Rect { center, half, yaw } => {
                let [ax, ay] = axes(yaw);
                let d = p - center;
                d.dot(&ax).abs() <= half.x && d.dot(&ay).abs() <= half.y
            }
        }
    }
}

/// Penetration of `b` into `a`, if any.
pub fn penetration(a: &Footprint, b: &Footprint) -> Option<Contact> {
    match (a, b) {
        (Footprint::Circle { center: ca, radius: ra }, Footprint::Circle { center: cb, radius: rb }) => {
            let d = cb - ca;
            let dist = d.norm();
            let depth = ra + rb - dist;
            if depth <= 0.0 {
                return None;
            }
            let normal = if dist > 1e-12 { d / dist } else { Vec2::x() };
            Some(Contact {
                normal,
                depth,
                point: ca + normal * (ra - depth / 2.0),
            })
        }
        (Footprint::Circle { center, radius }, rect @ Footprint::Rect { .. }) => circle_rect(center, *radius, rect),
        (rect @ Footprint::Rect { .. }, Footprint::Circle { center, radius }) => {
            circle_rect(center, *radius, rect).map(|c| Contact {
                normal: -c.normal,
                ..c
            })
        }
        (Footprint::Rect { .. }, Footprint::Rect { .. }) => rect_rect(a, b),
    }
}

/// Circle against rectangle; the normal points from the circle into the
/// rectangle.
fn circle_rect(c: &Vec2, r: f64, rect: &Footprint) -> Option<Contact> {
    let Footprint::Rect { center, half, yaw } = *rect else {
        unreachable!()
    };
    let [ax, ay] = axes(yaw);
    let d = c - center;
    let local = Vec2::new(d.dot(&ax), d.dot(&ay));
    let closest = Vec2::new(local.x.clamp(-half.x, half.x), local.y.clamp(-half.y, half.y));
    let off = local - closest;
    let dist = off.norm();
    let to_world = |v: Vec2| ax * v.x + ay * v.y;
    if dist > 1e-12 {
        if dist >= r {
            return None;
        }
        let n_local = off / dist;
        return Some(Contact {
            normal: -to_world(n_local),
            depth: r - dist,
            point: center + to_world(closest),
        });
    }
    // circle centre inside the rectangle: leave through the nearest face
    let gap_x = half.x - local.x.abs();
    let gap_y = half.y - local.y.abs();
    let (n_local, gap, point) = if gap_x <= gap_y {
        let s = if local.x >= 0.0 { 1.0 } else { -1.0 };
        (Vec2::new(s, 0.0), gap_x, Vec2::new(s * half.x, local.y))
    } else {
        let s = if local.y >= 0.0 { 1.0 } else { -1.0 };
        (Vec2::new(0.0, s), gap_y, Vec2::new(local.x, s * half.y))
    };
    Some(Contact {
        normal: -to_world(n_local),
        depth: r + gap,
        point: center + to_world(point),
    })
}

fn project(corners: &[Vec2; 4], axis: &Vec2) -> (f64, f64) {
    corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let v = p.dot(axis);
        (lo.min(v), hi.max(v))
    })
}

/// Separating-axis test between two rectangles.
fn rect_rect(a: &Footprint, b: &Footprint) -> Option<Contact> {
    let (Footprint::Rect { yaw: ya, .. }, Footprint::Rect { yaw: yb, .. }) = (a, b) else {
        unreachable!()
    };
    let ca = a.corners().unwrap();
    let cb = b.corners().unwrap();
    let mut best: Option<(f64, Vec2)> = None;
    for axis in axes(*ya).into_iter().chain(axes(*yb)) {
        let (a0, a1) = project(&ca, &axis);
        let (b0, b1) = project(&cb, &axis);
        let overlap = a1.min(b1) - a0.max(b0);
        if overlap <= 0.0 {
            return None;
        }
        if best.map_or(true, |(d, _)| overlap < d) {
            best = Some((overlap, axis));
        }
    }
    let (depth, mut normal) = best?;
    if (b.center() - a.center()).dot(&normal) < 0.0 {
        normal = -normal;
    }
    // deepest corner of b along the normal approximates the contact
    let point = cb
        .iter()
        .copied()
        .filter(|p| a.contains(p))
        .chain(ca.iter().copied().filter(|p| b.contains(p)))
        .next()
        .unwrap_or((a.center() + b.center()) / 2.0);
    Some(Contact { normal, depth, point })
}
