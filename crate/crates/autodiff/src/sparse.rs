use crate::real::Real;

/// Sparse row-combination matrix: output row `o` is `sum_k w_k * input[idx_k]`.
///
/// Covers row gathers, scatter-adds and weighted means in one primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows<T> {
    rows: Vec<Vec<(usize, T)>>,
    n_in: usize,
}

impl<T: Real> SparseRows<T> {
    pub fn new(rows: Vec<Vec<(usize, T)>>, n_in: usize) -> Self {
        debug_assert!(rows.iter().flatten().all(|&(i, _)| i < n_in));
        Self { rows, n_in }
    }

    /// Output row `o` copies input row `idx[o]`.
    pub fn gather(idx: &[usize], n_in: usize) -> Self {
        Self::new(idx.iter().map(|&i| vec![(i, T::one())]).collect(), n_in)
    }

    /// Input row `k` is added into output row `idx[k]`.
    pub fn scatter_add(idx: &[usize], n_out: usize) -> Self {
        let mut rows = vec![Vec::new(); n_out];
        for (k, &o) in idx.iter().enumerate() {
            rows[o].push((k, T::one()));
        }
        Self::new(rows, idx.len())
    }

    pub fn n_out(&self) -> usize {
        self.rows.len()
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn rows(&self) -> &[Vec<(usize, T)>] {
        &self.rows
    }

    pub(crate) fn apply(&self, x: &[T], cols: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows.len() * cols];
        for (o, row) in self.rows.iter().enumerate() {
            let dst = &mut out[o * cols..(o + 1) * cols];
            for &(i, w) in row {
                let src = &x[i * cols..(i + 1) * cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }

    pub(crate) fn apply_transpose(&self, g: &[T], cols: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_in * cols];
        for (o, row) in self.rows.iter().enumerate() {
            let src = &g[o * cols..(o + 1) * cols];
            for &(i, w) in row {
                let dst = &mut out[i * cols..(i + 1) * cols];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        out
    }
}
