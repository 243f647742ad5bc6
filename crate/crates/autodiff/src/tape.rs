//! Define-by-run computation tape.
//!
//! Every op appends a node holding its forward value. Nodes whose operands
//! never require gradients are stored as constants, so an inference tape
//! (see [`Tape::inference`]) keeps only values.

use std::cell::{Ref, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use crate::conv::{bilinear_backward, bilinear_forward, ConvGeom};
use crate::error::{Result, TensorError};
use crate::params::{ParamId, ParamStore};
use crate::real::{matmul_into, matmul_nt_into, matmul_tn_into, Real};
use crate::sparse::SparseRows;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// User-defined differentiable op. The forward value is computed by the
/// caller; the op only supplies the vector-Jacobian product.
pub trait CustomOp<T: Real> {
    fn name(&self) -> &'static str;

    /// Gradient for each input (same order as passed to [`Tape::custom`]).
    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Vec<Option<Tensor<T>>>;
}

enum Op<T: Real> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    Scale(Var, T),
    MulConst(Var, Rc<Tensor<T>>),
    Relu(Var),
    Softplus(Var),
    Sigmoid(Var),
    Exp(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    Transpose(Var),
    Sparse(Var, Rc<SparseRows<T>>),
    Conv3d(Var, Var, ConvGeom),
    Bilinear(Var, Rc<Vec<[T; 2]>>),
    Custom(Vec<Var>, Rc<dyn CustomOp<T>>),
}

struct Node<T: Real> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T: Real> {
    nodes: RefCell<Vec<Node<T>>>,
    param_nodes: RefCell<HashMap<ParamId, Var>>,
    grad_enabled: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(op: &'static str, a: &Tensor<impl Real>, b: &Tensor<impl Real>) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            param_nodes: RefCell::new(HashMap::new()),
            grad_enabled: true,
        }
    }

    /// A tape on which parameters are constants; nothing is differentiable.
    pub fn inference() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, v: Var) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn value_ref(&self, v: Var) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| n[v.0].value.as_ref())
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = parents.iter().any(|p| nodes[p.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn push_leaf(&self, value: Rc<Tensor<T>>, op: Op<T>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.push_leaf(Rc::new(value), Op::Leaf, false)
    }

    /// Differentiable input; its gradient is reported by [`Tape::backward`].
    pub fn leaf(&self, value: Tensor<T>) -> Var {
        let rg = self.grad_enabled;
        self.push_leaf(Rc::new(value), Op::Leaf, rg)
    }

    /// Node for a stored parameter; repeated calls return the same node.
    pub fn param(&self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.borrow().get(&id) {
            return v;
        }
        let rg = self.grad_enabled && store.get(id).requires_grad;
        let op = if rg { Op::Param(id) } else { Op::Leaf };
        let v = self.push_leaf(store.shared_value(id), op, rg);
        self.param_nodes.borrow_mut().insert(id, v);
        v
    }

    fn with2<R>(&self, a: Var, b: Var, f: impl FnOnce(&Tensor<T>, &Tensor<T>) -> R) -> R {
        let nodes = self.nodes.borrow();
        f(&nodes[a.0].value, &nodes[b.0].value)
    }

    fn with1<R>(&self, a: Var, f: impl FnOnce(&Tensor<T>) -> R) -> R {
        let nodes = self.nodes.borrow();
        f(&nodes[a.0].value)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.with2(a, b, |x, y| -> Result<Tensor<T>> {
            let (m, k) = match x.shape() {
                [m, k] => (*m, *k),
                _ => return Err(mismatch("matmul", x, y)),
            };
            let n = match y.shape() {
                [k2, n] if *k2 == k => *n,
                _ => return Err(mismatch("matmul", x, y)),
            };
            let mut c = vec![T::zero(); m * n];
            matmul_into(x.data(), y.data(), &mut c, m, k, n, false);
            Tensor::new(&[m, n], c)
        })?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    fn elementwise(
        &self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        let out = self.with2(a, b, |x, y| {
            if x.shape() != y.shape() {
                return Err(mismatch(name, x, y));
            }
            Ok(x.zip_map(y, &f))
        })?;
        Ok(self.push(out, op, &[a, b]))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// `a[n,m] + row[m]` broadcast over rows. `row` may be `[m]` or `[1,m]`.
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var> {
        let out = self.with2(a, row, |x, r| {
            let (n, m) = x.dims2()?;
            if r.numel() != m || x.rank() != 2 {
                return Err(mismatch("add_row", x, r));
            }
            let mut data = x.data().to_vec();
            for i in 0..n {
                for (d, &b) in data[i * m..(i + 1) * m].iter_mut().zip(r.data()) {
                    *d += b;
                }
            }
            Tensor::new(&[n, m], data)
        })?;
        Ok(self.push(out, Op::AddRow(a, row), &[a, row]))
    }

    /// `a[n,m] + col[n]` broadcast over columns.
    pub fn add_col(&self, a: Var, col: Var) -> Result<Var> {
        let out = self.with2(a, col, |x, c| {
            let (n, m) = x.dims2()?;
            if c.numel() != n || x.rank() != 2 {
                return Err(mismatch("add_col", x, c));
            }
            let mut data = x.data().to_vec();
            for i in 0..n {
                let b = c.data()[i];
                data[i * m..(i + 1) * m].iter_mut().for_each(|d| *d += b);
            }
            Tensor::new(&[n, m], data)
        })?;
        Ok(self.push(out, Op::AddCol(a, col), &[a, col]))
    }

    pub fn scale(&self, a: Var, s: T) -> Var {
        let out = self.with1(a, |x| x.map(|v| v * s));
        self.push(out, Op::Scale(a, s), &[a])
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(&self, a: Var, c: Rc<Tensor<T>>) -> Result<Var> {
        let out = self.with1(a, |x| {
            if x.shape() != c.shape() {
                return Err(mismatch("mul_const", x, &c));
            }
            Ok(x.zip_map(&c, |p, q| p * q))
        })?;
        Ok(self.push(out, Op::MulConst(a, c), &[a]))
    }

    pub fn relu(&self, a: Var) -> Var {
        let out = self.with1(a, |x| x.map(|v| if v > T::zero() { v } else { T::zero() }));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn softplus(&self, a: Var) -> Var {
        let out = self.with1(a, |x| x.map(softplus));
        self.push(out, Op::Softplus(a), &[a])
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let out = self.with1(a, |x| x.map(sigmoid));
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn exp(&self, a: Var) -> Var {
        let out = self.with1(a, |x| x.map(|v| v.exp()));
        self.push(out, Op::Exp(a), &[a])
    }

    pub fn sum(&self, a: Var) -> Var {
        let out = self.with1(a, |x| Tensor::scalar(x.sum()));
        self.push(out, Op::Sum(a), &[a])
    }

    pub fn mean(&self, a: Var) -> Var {
        let out = self.with1(a, |x| {
            Tensor::scalar(x.sum() / T::from_usize(x.numel()).unwrap())
        });
        self.push(out, Op::Mean(a), &[a])
    }

    /// Concatenates rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let vals: Vec<&Tensor<T>> = parts.iter().map(|p| nodes[p.0].value.as_ref()).collect();
            let first = vals.first().ok_or_else(|| TensorError::InvalidShape {
                shape: vec![],
                reason: "concat of zero tensors".into(),
            })?;
            let (n, _) = first.dims2()?;
            let mut widths = Vec::with_capacity(vals.len());
            for v in &vals {
                let (r, c) = v.dims2()?;
                if r != n || v.rank() != 2 {
                    return Err(mismatch("concat_cols", first, v));
                }
                widths.push(c);
            }
            let total: usize = widths.iter().sum();
            let mut data = Vec::with_capacity(n * total);
            for i in 0..n {
                for (v, &c) in vals.iter().zip(&widths) {
                    data.extend_from_slice(&v.data()[i * c..(i + 1) * c]);
                }
            }
            Tensor::new(&[n, total], data)?
        };
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Concatenates rank-2 tensors with equal column counts along rows.
    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let vals: Vec<&Tensor<T>> = parts.iter().map(|p| nodes[p.0].value.as_ref()).collect();
            let first = vals.first().ok_or_else(|| TensorError::InvalidShape {
                shape: vec![],
                reason: "concat of zero tensors".into(),
            })?;
            let (_, m) = first.dims2()?;
            let mut rows = 0;
            let mut data = Vec::new();
            for v in &vals {
                let (r, c) = v.dims2()?;
                if c != m {
                    return Err(mismatch("concat_rows", first, v));
                }
                rows += r;
                data.extend_from_slice(v.data());
            }
            Tensor::new(&[rows, m], data)?
        };
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.with1(a, |x| (*x).clone().reshape(shape))?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let out = self.with1(a, |x| {
            if x.rank() != 2 {
                return Err(TensorError::InvalidShape {
                    shape: x.shape().to_vec(),
                    reason: "transpose expects rank 2".into(),
                });
            }
            x.transpose2()
        })?;
        Ok(self.push(out, Op::Transpose(a), &[a]))
    }

    /// Applies a sparse row combination to a rank-2 tensor.
    pub fn sparse_rows(&self, a: Var, s: Rc<SparseRows<T>>) -> Result<Var> {
        let out = self.with1(a, |x| {
            let (n, c) = x.dims2()?;
            if n != s.n_in() || x.rank() != 2 {
                return Err(TensorError::ShapeMismatch {
                    op: "sparse_rows",
                    lhs: x.shape().to_vec(),
                    rhs: vec![s.n_out(), s.n_in()],
                });
            }
            Tensor::new(&[s.n_out(), c], s.apply(x.data(), c))
        })?;
        Ok(self.push(out, Op::Sparse(a, s), &[a]))
    }

    pub fn gather_rows(&self, a: Var, idx: &[usize]) -> Result<Var> {
        let n = self.shape(a)[0];
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(TensorError::IndexOutOfRange {
                op: "gather_rows",
                index: bad,
                extent: n,
            });
        }
        self.sparse_rows(a, Rc::new(SparseRows::gather(idx, n)))
    }

    pub fn scatter_add_rows(&self, a: Var, idx: &[usize], n_out: usize) -> Result<Var> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= n_out) {
            return Err(TensorError::IndexOutOfRange {
                op: "scatter_add_rows",
                index: bad,
                extent: n_out,
            });
        }
        self.sparse_rows(a, Rc::new(SparseRows::scatter_add(idx, n_out)))
    }

    /// Cross-correlation of `input[C_in,D,H,W]` with `kernel[C_out,C_in,k,k,k]`.
    pub fn conv3d(&self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (out, geom) = self.with2(input, kernel, |x, k| -> Result<_> {
            let g = ConvGeom::new(x.shape(), k.shape(), stride, padding)?;
            let data = g.forward(x.data(), k.data());
            Ok((Tensor::new(&[g.c_out, g.out[0], g.out[1], g.out[2]], data)?, g))
        })?;
        Ok(self.push(out, Op::Conv3d(input, kernel, geom), &[input, kernel]))
    }

    /// Bilinear lookup of `image[C,H,W]` at continuous `(u, v)` pixel
    /// coordinates (`u` along width). Pixel centers sit on integers;
    /// coordinates are clamped to the image border. Output is `[N, C]`.
    pub fn bilinear_sample(&self, image: Var, uv: Rc<Vec<[T; 2]>>) -> Result<Var> {
        let out = self.with1(image, |img| {
            let dims = match img.shape() {
                [c, h, w] => [*c, *h, *w],
                _ => {
                    return Err(TensorError::InvalidShape {
                        shape: img.shape().to_vec(),
                        reason: "bilinear_sample expects [C,H,W]".into(),
                    })
                }
            };
            if uv.is_empty() {
                return Err(TensorError::InvalidShape {
                    shape: vec![0],
                    reason: "no sample coordinates".into(),
                });
            }
            Tensor::new(&[uv.len(), dims[0]], bilinear_forward(img.data(), dims, &uv))
        })?;
        Ok(self.push(out, Op::Bilinear(image, uv), &[image]))
    }

    /// Records a custom op whose forward `output` was computed by the caller.
    pub fn custom(&self, inputs: &[Var], output: Tensor<T>, op: Rc<dyn CustomOp<T>>) -> Var {
        self.push(output, Op::Custom(inputs.to_vec(), op), inputs)
    }

    /// Reverse pass from a scalar root. Parameter gradients are accumulated
    /// into `store`; gradients of differentiable leaves are returned.
    pub fn backward(&self, root: Var, store: &mut ParamStore<T>) -> Result<Gradients<T>> {
        let grads = self.backward_raw(root)?;
        let nodes = self.nodes.borrow();
        let mut leaves = HashMap::new();
        for (i, g) in grads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            match nodes[i].op {
                Op::Param(id) => store.accumulate_grad(id, &g),
                Op::Leaf if nodes[i].requires_grad => {
                    leaves.insert(Var(i), g);
                }
                _ => {}
            }
        }
        Ok(Gradients { leaves })
    }

    fn backward_raw(&self, root: Var) -> Result<Vec<Option<Tensor<T>>>> {
        let nodes = self.nodes.borrow();
        let root_val = &nodes[root.0].value;
        if root_val.numel() != 1 {
            return Err(TensorError::NonScalarRoot(root_val.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::new(root_val.shape(), vec![T::one()])?);

        fn acc<T: Real>(grads: &mut [Option<Tensor<T>>], nodes: &[Node<T>], v: Var, g: Tensor<T>) {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(x) => x.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=root.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let g = match &node.op {
                Op::Leaf | Op::Param(_) => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            let val = |v: &Var| nodes[v.0].value.as_ref();
            match &node.op {
                Op::Leaf | Op::Param(_) => unreachable!(),
                Op::MatMul(a, b) => {
                    let (x, y) = (val(a), val(b));
                    let (m, k) = (x.shape()[0], x.shape()[1]);
                    let n = y.shape()[1];
                    if nodes[a.0].requires_grad {
                        let mut ga = vec![T::zero(); m * k];
                        matmul_nt_into(g.data(), y.data(), &mut ga, m, n, k, false);
                        acc(&mut grads, &nodes, *a, Tensor::new(&[m, k], ga)?);
                    }
                    if nodes[b.0].requires_grad {
                        let mut gb = vec![T::zero(); k * n];
                        matmul_tn_into(x.data(), g.data(), &mut gb, k, m, n, false);
                        acc(&mut grads, &nodes, *b, Tensor::new(&[k, n], gb)?);
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, &nodes, *a, g.clone());
                    acc(&mut grads, &nodes, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, &nodes, *b, g.map(|x| -x));
                    acc(&mut grads, &nodes, *a, g);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (val(a), val(b));
                    acc(&mut grads, &nodes, *a, g.zip_map(y, |p, q| p * q));
                    acc(&mut grads, &nodes, *b, g.zip_map(x, |p, q| p * q));
                }
                Op::AddRow(a, r) => {
                    if nodes[r.0].requires_grad {
                        let rv = val(r);
                        let m = rv.numel();
                        let mut gr = vec![T::zero(); m];
                        for row in g.data().chunks(m) {
                            for (d, &s) in gr.iter_mut().zip(row) {
                                *d += s;
                            }
                        }
                        acc(&mut grads, &nodes, *r, Tensor::new(rv.shape(), gr)?);
                    }
                    acc(&mut grads, &nodes, *a, g);
                }
                Op::AddCol(a, c) => {
                    if nodes[c.0].requires_grad {
                        let cv = val(c);
                        let m = g.numel() / cv.numel();
                        let gc: Vec<T> = g.data().chunks(m).map(|r| r.iter().copied().sum()).collect();
                        acc(&mut grads, &nodes, *c, Tensor::new(cv.shape(), gc)?);
                    }
                    acc(&mut grads, &nodes, *a, g);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    acc(&mut grads, &nodes, *a, g.map(|x| x * s));
                }
                Op::MulConst(a, c) => {
                    acc(&mut grads, &nodes, *a, g.zip_map(c, |p, q| p * q));
                }
                Op::Relu(a) => {
                    let x = val(a);
                    let ga = g.zip_map(x, |p, q| if q > T::zero() { p } else { T::zero() });
                    acc(&mut grads, &nodes, *a, ga);
                }
                Op::Softplus(a) => {
                    let x = val(a);
                    acc(&mut grads, &nodes, *a, g.zip_map(x, |p, q| p * sigmoid(q)));
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref();
                    let ga = g.zip_map(y, |p, s| p * s * (T::one() - s));
                    acc(&mut grads, &nodes, *a, ga);
                }
                Op::Exp(a) => {
                    let y = node.value.as_ref();
                    acc(&mut grads, &nodes, *a, g.zip_map(y, |p, e| p * e));
                }
                Op::Sum(a) => {
                    let x = val(a);
                    acc(&mut grads, &nodes, *a, Tensor::full(x.shape(), g.item())?);
                }
                Op::Mean(a) => {
                    let x = val(a);
                    let s = g.item() / T::from_usize(x.numel()).unwrap();
                    acc(&mut grads, &nodes, *a, Tensor::full(x.shape(), s)?);
                }
                Op::ConcatCols(parts) => {
                    let n = g.shape()[0];
                    let total = g.shape()[1];
                    let mut offset = 0;
                    for p in parts {
                        let c = val(p).shape()[1];
                        if nodes[p.0].requires_grad {
                            let mut d = Vec::with_capacity(n * c);
                            for i in 0..n {
                                d.extend_from_slice(&g.data()[i * total + offset..i * total + offset + c]);
                            }
                            acc(&mut grads, &nodes, *p, Tensor::new(&[n, c], d)?);
                        }
                        offset += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let m = g.shape()[1];
                    let mut offset = 0;
                    for p in parts {
                        let r = val(p).shape()[0];
                        if nodes[p.0].requires_grad {
                            let d = g.data()[offset * m..(offset + r) * m].to_vec();
                            acc(&mut grads, &nodes, *p, Tensor::new(&[r, m], d)?);
                        }
                        offset += r;
                    }
                }
                Op::Reshape(a) => {
                    let shape = val(a).shape().to_vec();
                    acc(&mut grads, &nodes, *a, g.reshape(&shape)?);
                }
                Op::Transpose(a) => {
                    acc(&mut grads, &nodes, *a, g.transpose2()?);
                }
                Op::Sparse(a, s) => {
                    let c = g.shape()[1];
                    let d = s.apply_transpose(g.data(), c);
                    acc(&mut grads, &nodes, *a, Tensor::new(&[s.n_in(), c], d)?);
                }
                Op::Conv3d(x, k, geom) => {
                    let (gx, gk) = geom.backward(val(x).data(), val(k).data(), g.data());
                    if nodes[x.0].requires_grad {
                        acc(&mut grads, &nodes, *x, Tensor::new(val(x).shape(), gx)?);
                    }
                    if nodes[k.0].requires_grad {
                        acc(&mut grads, &nodes, *k, Tensor::new(val(k).shape(), gk)?);
                    }
                }
                Op::Bilinear(img, uv) => {
                    let shape = val(img).shape();
                    let dims = [shape[0], shape[1], shape[2]];
                    let gi = bilinear_backward(g.data(), dims, uv);
                    acc(&mut grads, &nodes, *img, Tensor::new(shape, gi)?);
                }
                Op::Custom(inputs, op) => {
                    let ins: Vec<&Tensor<T>> = inputs.iter().map(val).collect();
                    let gs = op.backward(&ins, &node.value, &g);
                    for (v, gi) in inputs.iter().zip(gs) {
                        if let Some(gi) = gi {
                            acc(&mut grads, &nodes, *v, gi);
                        }
                    }
                }
            }
        }
        Ok(grads)
    }
}

/// Gradients of differentiable leaves created with [`Tape::leaf`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    leaves: HashMap<Var, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.leaves.get(&v)
    }
}

pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_of(t: &Tape<f64>, v: Var) -> f64 {
        t.value(v).item()
    }

    #[test]
    fn activation_values() {
        let t = Tape::<f64>::new();
        let x = t.constant(Tensor::new(&[3], vec![0.0, -3.2, 3.2]).unwrap());
        let sp = t.value(t.softplus(x));
        assert!((sp.data()[0] - std::f64::consts::LN_2).abs() < 1e-12);
        let sg = t.value(t.sigmoid(x));
        assert_eq!(sg.data()[0], 0.5);
        let r = t.value(t.relu(x));
        assert_eq!(r.data(), &[0.0, 0.0, 3.2]);
    }

    #[test]
    fn softplus_is_stable_for_large_inputs() {
        assert_eq!(softplus(1000.0f64), 1000.0);
        assert!(softplus(-1000.0f64) >= 0.0);
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f32), 1.0);
    }

    #[test]
    fn shape_mismatch_names_op_and_shapes() {
        let t = Tape::<f32>::new();
        let a = t.constant(Tensor::zeros(&[2, 3]).unwrap());
        let b = t.constant(Tensor::zeros(&[2, 3]).unwrap());
        let err = t.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            TensorError::ShapeMismatch {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3]
            }
        );
        let c = t.constant(Tensor::zeros(&[3]).unwrap());
        let msg = t.add(a, c).unwrap_err().to_string();
        assert!(msg.contains("add") && msg.contains("[2, 3]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn square_gradient() {
        let t = Tape::<f64>::new();
        let x = t.leaf(Tensor::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y, &mut ParamStore::new()).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
        assert_eq!(scalar_of(&t, y), 9.0);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let t = Tape::<f64>::new();
        let x = t.leaf(Tensor::zeros(&[2]).unwrap());
        let err = t.backward(x, &mut ParamStore::new()).unwrap_err();
        assert_eq!(err, TensorError::NonScalarRoot(vec![2]));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add("w", Tensor::new(&[2, 1], vec![0.3, -0.7]).unwrap());
        let run = |store: &mut ParamStore<f64>| {
            let t = Tape::new();
            let x = t.constant(Tensor::new(&[1, 2], vec![1.5, 2.0]).unwrap());
            let y = t.matmul(x, t.param(store, w)).unwrap();
            let s = t.sum(t.sigmoid(y));
            t.backward(s, store).unwrap();
        };
        run(&mut store);
        let once = store.grad(w).unwrap().clone();
        run(&mut store);
        let twice = store.grad(w).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn inference_tape_records_no_ops() {
        let mut store = ParamStore::<f32>::new();
        let w = store.add("w", Tensor::full(&[1, 1], 2.0).unwrap());
        let t = Tape::inference();
        let x = t.constant(Tensor::full(&[1, 1], 3.0).unwrap());
        let y = t.matmul(x, t.param(&store, w)).unwrap();
        assert!(!t.requires_grad(y));
        assert_eq!(t.value(y).item(), 6.0);
    }

    #[test]
    fn bilinear_lattice_midpoint_and_clamp() {
        let t = Tape::<f64>::new();
        // 1 channel, 4x5 image with value = 10*row + col
        let data: Vec<f64> = (0..4).flat_map(|r| (0..5).map(move |c| (10 * r + c) as f64)).collect();
        let img = t.constant(Tensor::new(&[1, 4, 5], data).unwrap());
        let uv = Rc::new(vec![[2.0, 3.0], [0.5, 0.0], [-10.0, 1.0], [14.0, 20.0]]);
        let out = t.value(t.bilinear_sample(img, uv).unwrap());
        assert_eq!(out.data()[0], 32.0);
        assert_eq!(out.data()[1], 0.5);
        assert_eq!(out.data()[2], 10.0);
        assert_eq!(out.data()[3], 34.0);
    }

    #[test]
    fn bilinear_two_pixel_midpoint() {
        let t = Tape::<f32>::new();
        let img = t.constant(Tensor::new(&[1, 1, 2], vec![0.0, 1.0]).unwrap());
        let out = t.value(t.bilinear_sample(img, Rc::new(vec![[0.5, 0.0]])).unwrap());
        assert_eq!(out.item(), 0.5);
    }
}
