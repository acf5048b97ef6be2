use super::broadcast::{broadcast_shape, reduced_strides, strides_in, walk2};
use super::{contiguous_strides, gemm, gemm_beta, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise nonlinearities supported by the engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Sin,
    Tanh,
    Sigmoid,
    /// Exact GELU, `x·Φ(x)` with `Φ` the standard normal CDF.
    Gelu,
    Sqrt,
    Exp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Binary(BinaryOp, Var, Var),
    Unary(UnaryOp, Var),
    Scale(Var, f64),
    Shift(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Permute(Var, Vec<usize>),
    Sum(Var, Vec<usize>),
    Slice { x: Var, axis: usize, start: usize },
    Concat { parts: Vec<Var>, axis: usize },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Binary(_, a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::Unary(_, x)
            | Op::Scale(x, _)
            | Op::Shift(x)
            | Op::Transpose(x)
            | Op::Reshape(x)
            | Op::Permute(x, _)
            | Op::Sum(x, _)
            | Op::Slice { x, .. } => vec![*x],
            Op::Concat { parts, .. } => parts.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Records a computation as a DAG of tensor operations and runs reverse-mode
/// differentiation over it.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and [`Tape::backward`] walks it once in reverse.
/// Gradients of leaves accumulate across repeated `backward` calls until
/// [`Tape::reset_grads`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Zeroes the gradient of every node.
    pub fn reset_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    // ---- elementwise -------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Div, a, b)
    }

    fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let f = |x: f64, y: f64| match op {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
            BinaryOp::Div => x / y,
        };
        let value = if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)?
        } else {
            let name = match op {
                BinaryOp::Add => "add",
                BinaryOp::Sub => "sub",
                BinaryOp::Mul => "mul",
                BinaryOp::Div => "div",
            };
            let out = broadcast_shape(ta.shape(), tb.shape())
                .ok_or_else(|| Error::dim(name, ta.shape(), tb.shape()))?;
            let sa = strides_in(ta.shape(), &out);
            let sb = strides_in(tb.shape(), &out);
            let mut data = vec![0.0; out.iter().product()];
            let (da, db) = (ta.data(), tb.data());
            walk2(&out, &sa, &sb, |i, oa, ob| data[i] = f(da[oa], db[ob]));
            Tensor::new(out, data)?
        };
        Ok(self.push(value, Op::Binary(op, a, b)))
    }

    pub fn unary(&mut self, op: UnaryOp, x: Var) -> Var {
        let t = &self.nodes[x.0].value;
        let data = t
            .data()
            .iter()
            .map(|&v| match op {
                UnaryOp::Sin => v.sin(),
                UnaryOp::Tanh => v.tanh(),
                UnaryOp::Sigmoid => sigmoid(v),
                UnaryOp::Gelu => gelu(v),
                UnaryOp::Sqrt => v.sqrt(),
                UnaryOp::Exp => v.exp(),
            })
            .collect();
        let value = Tensor {
            shape: t.shape().to_vec(),
            data,
        };
        self.push(value, Op::Unary(op, x))
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Sin, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Sigmoid, x)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Gelu, x)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Sqrt, x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Exp, x)
    }

    /// `c · x`
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = &self.nodes[x.0].value;
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v * c).collect(),
        };
        self.push(value, Op::Scale(x, c))
    }

    /// `x + c`
    pub fn shift(&mut self, x: Var, c: f64) -> Var {
        let t = &self.nodes[x.0].value;
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v + c).collect(),
        };
        self.push(value, Op::Shift(x))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    // ---- linear algebra and layout ----------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.ndim() != 2 || tb.ndim() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::dim("matmul", ta.shape(), tb.shape()));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut data = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut data);
        let value = Tensor {
            shape: vec![m, n],
            data,
        };
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        if t.ndim() != 2 {
            return Err(Error::Shape(format!(
                "transpose needs a matrix, got {:?}",
                t.shape()
            )));
        }
        let value = transpose2(t);
        Ok(self.push(value, Op::Transpose(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.nodes[x.0].value.clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Reorders axes: output axis `k` is input axis `perm[k]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let rank = t.ndim();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::dim("permute", t.shape(), perm));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| t.shape()[p]).collect();
        let xs = contiguous_strides(t.shape());
        let src: Vec<usize> = perm.iter().map(|&p| xs[p]).collect();
        let zero = vec![0; rank];
        let mut data = vec![0.0; t.numel()];
        let d = t.data();
        walk2(&out_shape, &src, &zero, |i, o, _| data[i] = d[o]);
        let value = Tensor {
            shape: out_shape,
            data,
        };
        Ok(self.push(value, Op::Permute(x, perm.to_vec())))
    }

    /// Sums over `axes`, dropping them from the shape.
    pub fn sum(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        let mut axes = axes.to_vec();
        axes.sort_unstable();
        axes.dedup();
        if axes.iter().any(|&a| a >= t.ndim()) {
            return Err(Error::dim("sum", t.shape(), &axes));
        }
        let out_shape: Vec<usize> = (0..t.ndim())
            .filter(|a| !axes.contains(a))
            .map(|a| t.shape()[a])
            .collect();
        let rs = reduced_strides(t.shape(), &axes);
        let zero = vec![0; t.ndim()];
        let mut data = vec![0.0; out_shape.iter().product()];
        let d = t.data();
        walk2(t.shape(), &rs, &zero, |i, o, _| data[o] += d[i]);
        let value = Tensor {
            shape: out_shape,
            data,
        };
        Ok(self.push(value, Op::Sum(x, axes)))
    }

    pub fn mean(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let count: usize = axes
            .iter()
            .filter(|&&a| a < shape.len())
            .map(|&a| shape[a])
            .product();
        let s = self.sum(x, axes)?;
        Ok(self.scale(s, 1.0 / count as f64))
    }

    /// Sum of every element, as a scalar.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let axes: Vec<usize> = (0..self.shape(x).len()).collect();
        self.sum(x, &axes).expect("all axes are valid")
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// `len` consecutive entries along `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = &self.nodes[x.0].value;
        if axis >= t.ndim() || start + len > t.shape()[axis] {
            return Err(Error::Shape(format!(
                "slice axis {axis} [{start}, {}) out of range for {:?}",
                start + len,
                t.shape()
            )));
        }
        let (outer, dim, inner) = split_at_axis(t.shape(), axis);
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            data.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let value = Tensor { shape, data };
        Ok(self.push(value, Op::Slice { x, axis, start }))
    }

    /// Joins tensors along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Shape("concat of zero tensors".into()))?;
        let base_shape = self.shape(*first).to_vec();
        if axis >= base_shape.len() {
            return Err(Error::dim("concat", &base_shape, &[axis]));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == base_shape.len()
                && s.iter()
                    .zip(&base_shape)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::dim("concat", &base_shape, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_at_axis(&base_shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let t = &self.nodes[p.0].value;
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base_shape;
        shape[axis] = total;
        let value = Tensor { shape, data };
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    // ---- reverse pass -----------------------------------------------

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for node in &mut self.nodes[..=loss.0] {
            if !matches!(node.op, Op::Leaf) {
                node.grad = None;
            }
        }
        let seed = Tensor::full(self.nodes[loss.0].value.shape(), 1.0);
        self.accumulate(loss, seed);
        for i in (0..=loss.0).rev() {
            let node = &mut self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = node.grad.take() else { continue };
            if let Op::MatMul(a, b) = node.op {
                if a != b {
                    self.accumulate_matmul(a, b, &g);
                    self.nodes[i].grad = Some(g);
                    continue;
                }
            }
            if let Op::Slice { x, axis, start } = node.op {
                self.accumulate_slice(x, axis, start, &g);
                self.nodes[i].grad = Some(g);
                continue;
            }
            let contributions = self.local_grads(i, &g);
            self.nodes[i].grad = Some(g);
            for (parent, t) in contributions {
                self.accumulate(parent, t);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, t: Tensor) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => g.add_assign(&t),
            None => node.grad = Some(t),
        }
    }

    /// Adds `g` into the window of `x`'s gradient that a slice read, without
    /// building a full-size temporary.
    fn accumulate_slice(&mut self, x: Var, axis: usize, start: usize, g: &Tensor) {
        let node = &mut self.nodes[x.0];
        if !node.requires_grad {
            return;
        }
        let (outer, dim, inner) = split_at_axis(node.value.shape(), axis);
        let grad = node.grad.get_or_insert_with(|| Tensor::zeros(node.value.shape()));
        let len = g.shape()[axis] * inner;
        let dst = grad.data_mut();
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            for (d, s) in dst[base..base + len].iter_mut().zip(&g.data()[o * len..(o + 1) * len]) {
                *d += s;
            }
        }
    }

    /// Matmul gradients written straight into the parents' buffers.
    fn accumulate_matmul(&mut self, a: Var, b: Var, g: &Tensor) {
        let (m, k) = (self.nodes[a.0].value.shape()[0], self.nodes[a.0].value.shape()[1]);
        let n = self.nodes[b.0].value.shape()[1];
        if self.wants(a) {
            let (beta, mut ga) = match self.nodes[a.0].grad.take() {
                Some(t) => (1.0, t),
                None => (0.0, Tensor::zeros(&[m, k])),
            };
            gemm_beta(m, n, k, g.data(), false, self.nodes[b.0].value.data(), true, beta, ga.data_mut());
            self.nodes[a.0].grad = Some(ga);
        }
        if self.wants(b) {
            let (beta, mut gb) = match self.nodes[b.0].grad.take() {
                Some(t) => (1.0, t),
                None => (0.0, Tensor::zeros(&[k, n])),
            };
            gemm_beta(k, m, n, self.nodes[a.0].value.data(), true, g.data(), false, beta, gb.data_mut());
            self.nodes[b.0].grad = Some(gb);
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn local_grads(&self, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Binary(op, a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (wa, wb) = (self.wants(*a), self.wants(*b));
                let mut ga = wa.then(|| vec![0.0; ta.numel()]);
                let mut gb = wb.then(|| vec![0.0; tb.numel()]);
                let (da, db, dg) = (ta.data(), tb.data(), g.data());
                let mut visit = |i: usize, oa: usize, ob: usize| {
                    let (x, y, gi) = (da[oa], db[ob], dg[i]);
                    let (pa, pb) = match op {
                        BinaryOp::Add => (gi, gi),
                        BinaryOp::Sub => (gi, -gi),
                        BinaryOp::Mul => (gi * y, gi * x),
                        BinaryOp::Div => (gi / y, -gi * x / (y * y)),
                    };
                    if let Some(ga) = ga.as_mut() {
                        ga[oa] += pa;
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[ob] += pb;
                    }
                };
                if ta.shape() == tb.shape() {
                    for k in 0..dg.len() {
                        visit(k, k, k);
                    }
                } else {
                    let shape = node.value.shape();
                    let sa = strides_in(ta.shape(), shape);
                    let sb = strides_in(tb.shape(), shape);
                    walk2(shape, &sa, &sb, visit);
                }
                if let Some(ga) = ga {
                    out.push((*a, Tensor::new(ta.shape().to_vec(), ga).unwrap()));
                }
                if let Some(gb) = gb {
                    out.push((*b, Tensor::new(tb.shape().to_vec(), gb).unwrap()));
                }
            }
            Op::Unary(op, x) => {
                let tx = &self.nodes[x.0].value;
                let y = node.value.data();
                let data = tx
                    .data()
                    .iter()
                    .zip(y)
                    .zip(g.data())
                    .map(|((&xv, &yv), &gv)| {
                        gv * match op {
                            UnaryOp::Sin => xv.cos(),
                            UnaryOp::Tanh => 1.0 - yv * yv,
                            UnaryOp::Sigmoid => yv * (1.0 - yv),
                            UnaryOp::Gelu => gelu_derivative(xv),
                            UnaryOp::Sqrt => 0.5 / yv,
                            UnaryOp::Exp => yv,
                        }
                    })
                    .collect();
                out.push((*x, Tensor::new(tx.shape().to_vec(), data).unwrap()));
            }
            Op::Scale(x, c) => {
                let data = g.data().iter().map(|v| v * c).collect();
                out.push((*x, Tensor::new(g.shape().to_vec(), data).unwrap()));
            }
            Op::Shift(x) => out.push((*x, g.clone())),
            Op::MatMul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.wants(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, tb.data(), true, &mut ga);
                    out.push((*a, Tensor::new(vec![m, k], ga).unwrap()));
                }
                if self.wants(*b) {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), true, g.data(), false, &mut gb);
                    out.push((*b, Tensor::new(vec![k, n], gb).unwrap()));
                }
            }
            Op::Transpose(x) => out.push((*x, transpose2(g))),
            Op::Reshape(x) => {
                let shape = self.nodes[x.0].value.shape().to_vec();
                out.push((*x, g.clone().reshaped(&shape).unwrap()));
            }
            Op::Permute(x, perm) => {
                let tx = &self.nodes[x.0].value;
                let xs = contiguous_strides(tx.shape());
                let src: Vec<usize> = perm.iter().map(|&p| xs[p]).collect();
                let zero = vec![0; perm.len()];
                let mut data = vec![0.0; tx.numel()];
                let dg = g.data();
                walk2(node.value.shape(), &src, &zero, |i, o, _| data[o] += dg[i]);
                out.push((*x, Tensor::new(tx.shape().to_vec(), data).unwrap()));
            }
            Op::Sum(x, axes) => {
                let tx = &self.nodes[x.0].value;
                let rs = reduced_strides(tx.shape(), axes);
                let zero = vec![0; tx.ndim()];
                let mut data = vec![0.0; tx.numel()];
                let dg = g.data();
                walk2(tx.shape(), &rs, &zero, |i, o, _| data[i] = dg[o]);
                out.push((*x, Tensor::new(tx.shape().to_vec(), data).unwrap()));
            }
            Op::Slice { .. } => unreachable!("slices accumulate in place"),
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_at_axis(g.shape(), *axis);
                let mut offset = 0;
                for p in parts {
                    let tp = &self.nodes[p.0].value;
                    let len = tp.shape()[*axis];
                    if self.wants(*p) {
                        let mut data = Vec::with_capacity(tp.numel());
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            data.extend_from_slice(&g.data()[src..src + len * inner]);
                        }
                        out.push((*p, Tensor::new(tp.shape().to_vec(), data).unwrap()));
                    }
                    offset += len;
                }
            }
        }
        out
    }
}

fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn transpose2(t: &Tensor) -> Tensor {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    let mut data = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            data[j * r + i] = t.data()[i * c + j];
        }
    }
    Tensor {
        shape: vec![c, r],
        data,
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_derivative(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)) + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}
