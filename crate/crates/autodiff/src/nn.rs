//! Dense layers built on the tape.

use rand::Rng;

use crate::error::Result;
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// He-uniform, for layers followed by ReLU.
    He,
    /// Glorot-uniform, for output layers.
    Glorot,
}

pub fn init_tensor<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    init: Init,
) -> Tensor<T> {
    let bound = match init {
        Init::He => (6.0 / fan_in as f64).sqrt(),
        Init::Glorot => (6.0 / (fan_in + fan_out) as f64).sqrt(),
    };
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| T::lit(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::new(shape, data).expect("init shape")
}

/// `y = x W (+ b)` with `W: [in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let w = init_tensor(rng, &[fan_in, fan_out], fan_in, fan_out, init);
        let weight = store.add(format!("{name}.weight"), w);
        let bias = bias.then(|| {
            store.add(
                format!("{name}.bias"),
                Tensor::zeros(&[fan_out]).expect("bias shape"),
            )
        });
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward<T: Real>(&self, tape: &Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let y = tape.matmul(x, w)?;
        match self.bias {
            Some(b) => tape.add_row(y, tape.param(store, b)),
            None => Ok(y),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        std::iter::once(self.weight).chain(self.bias).collect()
    }
}

/// Stack of [`Linear`] layers with ReLU between them; the last layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `widths = [in, hidden.., out]`.
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        widths: &[usize],
        rng: &mut R,
    ) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let init = if i == last { Init::Glorot } else { Init::He };
                Linear::new(store, &format!("{name}.{i}"), w[0], w[1], true, init, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn forward<T: Real>(&self, tape: &Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, store, h)?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Like [`Mlp::forward`] but with ReLU after the last layer too.
    pub fn forward_relu<T: Real>(
        &self,
        tape: &Tape<T>,
        store: &ParamStore<T>,
        x: Var,
    ) -> Result<Var> {
        let h = self.forward(tape, store, x)?;
        Ok(tape.relu(h))
    }

    pub fn in_width(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn out_width(&self) -> usize {
        self.layers.last().unwrap().fan_out
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(Linear::params).collect()
    }
}
