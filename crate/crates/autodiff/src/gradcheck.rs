//! Central finite-difference checks of tape gradients (64-bit only).
//!
//! The numeric side evaluates the loss closure forward only, so it is
//! independent of every backward rule it checks.

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    pub step: f64,
    /// Denominator floor of the relative error, so gradients that are
    /// both ~0 do not divide by ~0.
    pub abs_floor: f64,
    /// Entries probed per tensor (evenly spaced).
    pub max_entries: usize,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            abs_floor: 1e-6,
            max_entries: 24,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<Mismatch>,
}

impl GradCheckReport {
    fn record(&mut self, cfg: &GradCheck, tensor: &str, index: usize, analytic: f64, numeric: f64) {
        self.checked += 1;
        let denom = analytic.abs().max(numeric.abs()).max(cfg.abs_floor);
        let rel = (analytic - numeric).abs() / denom;
        if rel > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = self.max_rel_err.max(rel);
            self.worst = Some(Mismatch {
                tensor: tensor.to_string(),
                index,
                analytic,
                numeric,
            });
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        if other.max_rel_err >= self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst.or(self.worst.take());
        }
    }
}

fn probe_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    (0..max).map(|i| i * n / max + (n / max) / 2).collect()
}

fn eval(
    store: &ParamStore<f64>,
    f: &impl Fn(&Tape<f64>, &ParamStore<f64>) -> Result<Var>,
) -> Result<f64> {
    let tape = Tape::inference();
    let v = f(&tape, store)?;
    Ok(tape.value(v).item())
}

/// Compares analytic parameter gradients of the scalar built by `f` with
/// central differences.
pub fn check_params(
    store: &mut ParamStore<f64>,
    ids: &[ParamId],
    cfg: GradCheck,
    f: impl Fn(&Tape<f64>, &ParamStore<f64>) -> Result<Var>,
) -> Result<GradCheckReport> {
    store.clear_grads();
    store.zero_grad(ids);
    {
        let tape = Tape::new();
        let root = f(&tape, store)?;
        tape.backward(root, store)?;
    }
    let mut report = GradCheckReport::default();
    for &id in ids {
        let analytic = store.grad(id)?.clone();
        let name = store.get(id).name.clone();
        for i in probe_indices(analytic.numel(), cfg.max_entries) {
            let orig = store.value(id).data()[i];
            store.get_mut(id).value_mut().data_mut()[i] = orig + cfg.step;
            let plus = eval(store, &f)?;
            store.get_mut(id).value_mut().data_mut()[i] = orig - cfg.step;
            let minus = eval(store, &f)?;
            store.get_mut(id).value_mut().data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            report.record(&cfg, &name, i, analytic.data()[i], numeric);
        }
    }
    Ok(report)
}

/// Same as [`check_params`] but for a differentiable input tensor.
pub fn check_input(
    input: &Tensor<f64>,
    cfg: GradCheck,
    f: impl Fn(&Tape<f64>, Var) -> Result<Var>,
) -> Result<GradCheckReport> {
    let analytic = {
        let tape = Tape::new();
        let x = tape.leaf(input.clone());
        let root = f(&tape, x)?;
        let mut empty = ParamStore::new();
        let grads = tape.backward(root, &mut empty)?;
        grads
            .get(x)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.shape()).expect("input shape"))
    };
    let eval_at = |t: Tensor<f64>| -> Result<f64> {
        let tape = Tape::inference();
        let x = tape.constant(t);
        let v = f(&tape, x)?;
        Ok(tape.value(v).item())
    };
    let mut report = GradCheckReport::default();
    for i in probe_indices(input.numel(), cfg.max_entries) {
        let mut p = input.clone();
        p.data_mut()[i] += cfg.step;
        let plus = eval_at(p)?;
        let mut m = input.clone();
        m.data_mut()[i] -= cfg.step;
        let minus = eval_at(m)?;
        let numeric = (plus - minus) / (2.0 * cfg.step);
        report.record(&cfg, "input", i, analytic.data()[i], numeric);
    }
    Ok(report)
}
