//! Planar RGB images, binary masks and posed multi-view observations.

use crate::error::{CoreError, Result};
use crate::geometry::Camera;

/// RGB image stored channel-planar (`[3, height, width]`), values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn black(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    pub fn from_planar(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), 3 * width * height, "planar RGB buffer size");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn planar(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, col: usize, row: usize) -> [f32; 3] {
        let n = self.width * self.height;
        let i = row * self.width + col;
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }

    pub fn set_pixel(&mut self, col: usize, row: usize, rgb: [f32; 3]) {
        let n = self.width * self.height;
        let i = row * self.width + col;
        self.data[i] = rgb[0];
        self.data[n + i] = rgb[1];
        self.data[2 * n + i] = rgb[2];
    }

    /// Copy with every pixel outside `mask` set to black.
    pub fn masked(&self, mask: &Mask) -> Image {
        let mut out = Image::black(self.width, self.height);
        for (i, &m) in mask.data.iter().enumerate() {
            if m {
                let (c, r) = (i % self.width, i / self.width);
                out.set_pixel(c, r, self.pixel(c, r));
            }
        }
        out
    }

    /// Interleaved 8-bit RGB, row-major.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(3 * self.width * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                for v in self.pixel(c, r) {
                    out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        out
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Self {
        let mut img = Image::black(width, height);
        for r in 0..height {
            for c in 0..width {
                let i = 3 * (r * width + c);
                img.set_pixel(
                    c,
                    r,
                    [
                        bytes[i] as f32 / 255.0,
                        bytes[i + 1] as f32 / 255.0,
                        bytes[i + 2] as f32 / 255.0,
                    ],
                );
            }
        }
        img
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height)
            .flat_map(|r| (0..width).map(move |c| (c, r)))
            .map(|(c, r)| f(c, r))
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn get(&self, col: usize, row: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Pixel indices (`row * width + col`) that are set.
    pub fn pixels(&self) -> Vec<usize> {
        (0..self.data.len()).filter(|&i| self.data[i]).collect()
    }

    pub fn union(masks: &[Mask], width: usize, height: usize) -> Mask {
        let mut out = Mask::empty(width, height);
        for m in masks {
            for (o, &v) in out.data.iter_mut().zip(&m.data) {
                *o |= v;
            }
        }
        out
    }

    /// Binary dilation by a `(2r+1) x (2r+1)` square of ones.
    pub fn dilate(&self, r: usize) -> Mask {
        if r == 0 {
            return self.clone();
        }
        let (w, h) = (self.width, self.height);
        let mut rows = Mask::empty(w, h);
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(r);
                let hi = (x + r).min(w - 1);
                rows.data[y * w + x] = (lo..=hi).any(|xx| self.data[y * w + xx]);
            }
        }
        let mut out = Mask::empty(w, h);
        for y in 0..h {
            let lo = y.saturating_sub(r);
            let hi = (y + r).min(h - 1);
            for x in 0..w {
                out.data[y * w + x] = (lo..=hi).any(|yy| rows.data[yy * w + x]);
            }
        }
        out
    }
}

/// One camera's image, its calibration and a mask per object.
#[derive(Clone, Debug, PartialEq)]
pub struct PosedView {
    pub image: Image,
    pub camera: Camera,
    pub masks: Vec<Mask>,
}

impl PosedView {
    pub fn object_count(&self) -> usize {
        self.masks.len()
    }

    /// Union of all object masks.
    pub fn mask_total(&self) -> Mask {
        Mask::union(&self.masks, self.image.width, self.image.height)
    }
}

/// Checks that all views agree on the object count and that masks match
/// their images. Returns the object count.
pub fn check_views(views: &[PosedView]) -> Result<usize> {
    let first = views.first().ok_or(CoreError::NoViews)?;
    let m = first.object_count();
    for (i, v) in views.iter().enumerate() {
        if v.object_count() != m {
            return Err(CoreError::ObjectCountMismatch {
                view: i,
                expected: m,
                found: v.object_count(),
            });
        }
        let img = (v.image.width, v.image.height);
        for mask in &v.masks {
            if (mask.width, mask.height) != img {
                return Err(CoreError::MaskExtent {
                    mask: (mask.width, mask.height),
                    image: img,
                });
            }
        }
    }
    Ok(m)
}
