use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// ADAM with bias correction over a fixed parameter subset.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub params: Vec<ParamId>,
    pub step: u64,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(store: &ParamStore<T>, params: Vec<ParamId>, config: AdamConfig) -> Self {
        let first: Vec<Vec<T>> = params
            .iter()
            .map(|&p| vec![T::zero(); store.value(p).numel()])
            .collect();
        Self {
            config,
            second: first.clone(),
            first,
            params,
            step: 0,
        }
    }

    /// Applies one update from the current gradients. Fails without touching
    /// any parameter if some gradient is missing.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        for &p in &self.params {
            store.grad(p)?;
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one = T::one();
        let bc1 = T::lit(1.0 - c.beta1.powi(t));
        let bc2 = T::lit(1.0 - c.beta2.powi(t));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        for (i, &p) in self.params.iter().enumerate() {
            let grad = store.grad(p)?.data().to_vec();
            let m = &mut self.first[i];
            let v = &mut self.second[i];
            let param = store.get_mut(p).value_mut();
            for (((w, &g), m), v) in param.data_mut().iter_mut().zip(&grad).zip(m).zip(v) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
