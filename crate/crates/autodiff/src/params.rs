use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Result, TensorError};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub(crate) value: Rc<Tensor<T>>,
    pub grad: Option<Tensor<T>>,
    pub requires_grad: bool,
}

impl<T: Real> Param<T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor<T> {
        Rc::make_mut(&mut self.value)
    }
}

/// Named collection of trainable tensors.
///
/// Values are shared copy-on-write with any live tape, so building a forward
/// pass never copies weights.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    /// Registers a parameter. Panics on duplicate names, which is a
    /// construction bug rather than a runtime condition.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            value: Rc::new(value),
            grad: None,
            requires_grad: true,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub(crate) fn shared_value(&self, id: ParamId) -> Rc<Tensor<T>> {
        Rc::clone(&self.params[id.0].value)
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalars across `ids`.
    pub fn count(&self, ids: &[ParamId]) -> usize {
        ids.iter().map(|&id| self.value(id).numel()).sum()
    }

    /// Resets gradients of `ids` to zero buffers.
    pub fn zero_grad(&mut self, ids: &[ParamId]) {
        for &id in ids {
            let p = &mut self.params[id.0];
            match &mut p.grad {
                Some(g) => g.data_mut().iter_mut().for_each(|x| *x = T::zero()),
                None => {
                    p.grad = Some(Tensor::zeros(p.value.shape()).expect("param shape valid"))
                }
            }
        }
    }

    pub fn clear_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &Tensor<T>) {
        let p = &mut self.params[id.0];
        if !p.requires_grad {
            return;
        }
        match &mut p.grad {
            Some(acc) => acc.add_assign(g),
            None => p.grad = Some(g.clone()),
        }
    }

    pub fn grad(&self, id: ParamId) -> Result<&Tensor<T>> {
        let p = &self.params[id.0];
        p.grad
            .as_ref()
            .ok_or_else(|| TensorError::MissingGrad(p.name.clone()))
    }

    pub fn set_requires_grad(&mut self, ids: &[ParamId], flag: bool) {
        for &id in ids {
            self.params[id.0].requires_grad = flag;
        }
    }

    /// Converts every parameter to another precision, keeping names and ids.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: Rc::new(p.value.cast()),
                    grad: None,
                    requires_grad: p.requires_grad,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}
