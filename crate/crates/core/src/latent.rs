use cdyn_autodiff::{Real, Tensor};

use crate::error::{CoreError, Result};

/// Ordered per-object latent vectors, stored as an `[m, k]` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSet<T = f32> {
    z: Tensor<T>,
}

impl<T: Real> LatentSet<T> {
    pub fn from_tensor(z: Tensor<T>) -> Result<Self> {
        z.dims2()?;
        Ok(Self { z })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Ok(Self {
            z: Tensor::from_rows(rows)?,
        })
    }

    pub fn len(&self) -> usize {
        self.z.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.z.shape()[1]
    }

    pub fn get(&self, j: usize) -> &[T] {
        self.z.row(j)
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.z
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.z
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.len()).map(|j| self.get(j).to_vec()).collect()
    }

    /// Replaces object `j`'s vector.
    pub fn with_row(&self, j: usize, row: &[T]) -> Result<Self> {
        if row.len() != self.dim() {
            return Err(CoreError::LatentDim {
                expected: self.dim(),
                found: row.len(),
            });
        }
        let mut z = self.z.clone();
        let k = self.dim();
        z.data_mut()[j * k..(j + 1) * k].copy_from_slice(row);
        Ok(Self { z })
    }

    /// Output row `i` is input row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let rows: Vec<Vec<T>> = perm.iter().map(|&p| self.get(p).to_vec()).collect();
        Self {
            z: Tensor::from_rows(&rows).expect("permutation keeps shape"),
        }
    }

    pub fn cast<U: Real>(&self) -> LatentSet<U> {
        LatentSet { z: self.z.cast() }
    }

    /// Mean squared difference over the listed objects.
    pub fn mse_over(&self, other: &Self, objects: &[usize]) -> f64 {
        if objects.is_empty() {
            return 0.0;
        }
        let mut acc = 0.0;
        for &j in objects {
            for (a, b) in self.get(j).iter().zip(other.get(j)) {
                let d = (*a - *b).to_f64().unwrap();
                acc += d * d;
            }
        }
        acc / (objects.len() * self.dim()) as f64
    }
}
