use std::borrow::Cow;

use super::tensor::{dims2, matmul_nt_into, matmul_tn_into, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Tanh,
    Sigmoid,
    Exp,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Softmax { x: Var, axis: usize },
    LogSoftmax { x: Var, axis: usize },
    MaskedSoftmax(Var),
    Sum(Var),
    Reshape(Var),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    RepeatRows(Var),
    Pick { x: Var, index: usize },
}

struct Node<'a> {
    op: Op,
    value: Cow<'a, Tensor>,
    requires_grad: bool,
}

/// Define-by-run record of tensor operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so every parent index is smaller
/// than its child's. Parameters can be bound by reference to avoid copies.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    backward_done: bool,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

/// Accumulated gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), backward_done: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node { op, value: Cow::Owned(value), requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that receives a gradient.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value: Cow::Owned(t), requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value: Cow::Owned(t), requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// Borrow a parameter tensor as a gradient-receiving leaf.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.nodes.push(Node { op: Op::Leaf, value: Cow::Borrowed(t), requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::MatMul(a, b), out, rg, "matmul")
    }

    pub fn binary(&mut self, op: Binary, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::Dimension(format!(
                "{op:?} operands differ: {:?} vs {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let f: fn(f64, f64) -> f64 = match op {
            Binary::Add => |p, q| p + q,
            Binary::Sub => |p, q| p - q,
            Binary::Mul => |p, q| p * q,
        };
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::Binary(op, a, b), out, rg, "binary op")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn unary(&mut self, op: Unary, a: Var) -> Result<Var> {
        let x = self.value(a);
        if op == Unary::Log {
            if let Some(bad) = x.data().iter().find(|&&v| v <= 0.0) {
                return Err(Error::Domain(format!("log of non-positive value {bad}")));
            }
        }
        let out = match op {
            Unary::Tanh => x.map(f64::tanh),
            Unary::Sigmoid => x.map(sigmoid),
            Unary::Exp => x.map(f64::exp),
            Unary::Log => x.map(f64::ln),
        };
        let rg = self.rg(a);
        self.push(Op::Unary(op, a), out, rg, "unary op")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Log, a)
    }

    /// Multiply by a constant scalar.
    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * s);
        let rg = self.rg(a);
        self.push(Op::Scale(a, s), out, rg, "scale")
    }

    /// Add a constant scalar to every element.
    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v + s);
        let rg = self.rg(a);
        self.push(Op::AddScalar(a), out, rg, "add_scalar")
    }

    fn axis_layout(&self, x: Var, axis: usize) -> Result<(usize, usize, usize)> {
        let shape = self.shape(x);
        if axis >= shape.len() {
            return Err(Error::Dimension(format!("axis {axis} out of range for {shape:?}")));
        }
        let outer = shape[..axis].iter().product();
        let inner = shape[axis + 1..].iter().product();
        Ok((outer, shape[axis], inner))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, n, inner) = self.axis_layout(x, axis)?;
        let v = self.value(x);
        let mut out = v.clone();
        let data = out.data_mut();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                let max = (0..n).map(|j| v.data()[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..n {
                    let e = (v.data()[idx(j)] - max).exp();
                    data[idx(j)] = e;
                    z += e;
                }
                for j in 0..n {
                    data[idx(j)] /= z;
                }
            }
        }
        let rg = self.rg(x);
        self.push(Op::Softmax { x, axis }, out, rg, "softmax")
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (outer, n, inner) = self.axis_layout(x, axis)?;
        let v = self.value(x);
        let mut out = v.clone();
        let data = out.data_mut();
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * n + j) * inner + i;
                let max = (0..n).map(|j| v.data()[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = (0..n).map(|j| (v.data()[idx(j)] - max).exp()).sum();
                let lse = max + z.ln();
                for j in 0..n {
                    data[idx(j)] = v.data()[idx(j)] - lse;
                }
            }
        }
        let rg = self.rg(x);
        self.push(Op::LogSoftmax { x, axis }, out, rg, "log_softmax")
    }

    /// Softmax over the last axis restricted to positions where `mask` is
    /// true. Masked positions get exactly zero probability.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let v = self.value(x);
        let cols = v.cols();
        if mask.len() != cols {
            return Err(Error::Dimension(format!("mask length {} vs {cols} columns", mask.len())));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Contract("all attention positions are masked".into()));
        }
        let mut out = Tensor::zeros(v.shape());
        for r in 0..v.rows() {
            let row = v.row_slice(r);
            let max = row
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(&x, _)| x)
                .fold(f64::NEG_INFINITY, f64::max);
            let o = &mut out.data_mut()[r * cols..(r + 1) * cols];
            let mut z = 0.0;
            for j in 0..cols {
                if mask[j] {
                    o[j] = (row[j] - max).exp();
                    z += o[j];
                }
            }
            for val in o.iter_mut() {
                *val /= z;
            }
        }
        let rg = self.rg(x);
        self.push(Op::MaskedSoftmax(x), out, rg, "masked_softmax")
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Op::Sum(x), Tensor::scalar(s), rg, "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len() as f64;
        let s = self.sum(x)?;
        self.scale(s, 1.0 / n)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(x);
        self.push(Op::Reshape(x), out, rg, "reshape")
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(x);
        let (m, n) = dims2(v)?;
        if len == 0 || start + len > m {
            return Err(Error::Dimension(format!("row slice {start}+{len} of {m} rows")));
        }
        let out = Tensor::new(vec![len, n], v.data()[start * n..(start + len) * n].to_vec())?;
        let rg = self.rg(x);
        self.push(Op::SliceRows { x, start }, out, rg, "slice_rows")
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(x);
        let (m, n) = dims2(v)?;
        if len == 0 || start + len > n {
            return Err(Error::Dimension(format!("column slice {start}+{len} of {n} columns")));
        }
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&v.data()[r * n + start..r * n + start + len]);
        }
        let out = Tensor::new(vec![m, len], data)?;
        let rg = self.rg(x);
        self.push(Op::SliceCols { x, start }, out, rg, "slice_cols")
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::Contract("concat of nothing".into()))?;
        let (m, _) = dims2(self.value(first))?;
        let mut total = 0;
        for &x in xs {
            let (r, c) = dims2(self.value(x))?;
            if r != m {
                return Err(Error::Dimension(format!("concat_cols rows {r} vs {m}")));
            }
            total += c;
        }
        let mut data = Vec::with_capacity(m * total);
        for r in 0..m {
            for &x in xs {
                data.extend_from_slice(self.value(x).row_slice(r));
            }
        }
        let out = Tensor::new(vec![m, total], data)?;
        let rg = xs.iter().any(|&x| self.rg(x));
        self.push(Op::ConcatCols(xs.to_vec()), out, rg, "concat_cols")
    }

    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::Contract("concat of nothing".into()))?;
        let (_, n) = dims2(self.value(first))?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &x in xs {
            let (r, c) = dims2(self.value(x))?;
            if c != n {
                return Err(Error::Dimension(format!("concat_rows cols {c} vs {n}")));
            }
            rows += r;
            data.extend_from_slice(self.value(x).data());
        }
        let out = Tensor::new(vec![rows, n], data)?;
        let rg = xs.iter().any(|&x| self.rg(x));
        self.push(Op::ConcatRows(xs.to_vec()), out, rg, "concat_rows")
    }

    /// Tile a `[1 × n]` row into `[times × n]`.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        let v = self.value(x);
        let (m, n) = dims2(v)?;
        if m != 1 || times == 0 {
            return Err(Error::Dimension(format!("repeat_rows needs a [1 x n] row, got {:?}", v.shape())));
        }
        let data = v.data().repeat(times);
        let out = Tensor::new(vec![times, n], data)?;
        let rg = self.rg(x);
        self.push(Op::RepeatRows(x), out, rg, "repeat_rows")
    }

    /// Select one element (flat row-major index) as a scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let v = self.value(x);
        let val = *v
            .data()
            .get(index)
            .ok_or_else(|| Error::Dimension(format!("pick {index} of {}", v.len())))?;
        let rg = self.rg(x);
        self.push(Op::Pick { x, index }, Tensor::scalar(val), rg, "pick")
    }

    /// Run reverse accumulation from a scalar loss.
    ///
    /// Nodes are visited in strictly decreasing index order. A tape can be
    /// differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::Contract("backward already ran on this tape".into()));
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));
        for k in (0..=loss.0).rev() {
            let Some(g) = grads[k].take() else { continue };
            if !self.nodes[k].requires_grad {
                continue;
            }
            self.propagate(k, &g, &mut grads);
            grads[k] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, k: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[k];
        let y = &*node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, kk) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if self.rg(*a) {
                    let ga = slot(grads, *a, av.shape());
                    matmul_nt_into(g.data(), bv.data(), ga.data_mut(), m, kk, n);
                }
                if self.rg(*b) {
                    let gb = slot(grads, *b, bv.shape());
                    matmul_tn_into(av.data(), g.data(), gb.data_mut(), m, kk, n);
                }
            }
            Op::Binary(op, a, b) => {
                let (a, b) = (*a, *b);
                match op {
                    Binary::Add | Binary::Sub => {
                        if self.rg(a) {
                            slot(grads, a, g.shape()).add_assign(g);
                        }
                        if self.rg(b) {
                            let sign = if *op == Binary::Add { 1.0 } else { -1.0 };
                            let gb = slot(grads, b, g.shape());
                            for (o, &d) in gb.data_mut().iter_mut().zip(g.data()) {
                                *o += sign * d;
                            }
                        }
                    }
                    Binary::Mul => {
                        let (av, bv) = (self.value(a), self.value(b));
                        if self.rg(a) {
                            let ga = slot(grads, a, g.shape());
                            for ((o, &d), &q) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                                *o += d * q;
                            }
                        }
                        if self.rg(b) {
                            let gb = slot(grads, b, g.shape());
                            for ((o, &d), &p) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                                *o += d * p;
                            }
                        }
                    }
                }
            }
            Op::Unary(op, a) => {
                let xv = self.value(*a);
                let ga = slot(grads, *a, g.shape());
                let it = ga.data_mut().iter_mut().zip(g.data()).zip(y.data()).zip(xv.data());
                for (((o, &d), &yy), &xx) in it {
                    *o += d * match op {
                        Unary::Tanh => 1.0 - yy * yy,
                        Unary::Sigmoid => yy * (1.0 - yy),
                        Unary::Exp => yy,
                        Unary::Log => 1.0 / xx,
                    };
                }
            }
            Op::Scale(a, s) => {
                let ga = slot(grads, *a, g.shape());
                for (o, &d) in ga.data_mut().iter_mut().zip(g.data()) {
                    *o += d * s;
                }
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                let shape = self.shape(*a).to_vec();
                let ga = slot(grads, *a, &shape);
                for (o, &d) in ga.data_mut().iter_mut().zip(g.data()) {
                    *o += d;
                }
            }
            Op::Softmax { x, axis } => {
                let (outer, n, inner) = self.axis_layout(*x, *axis).expect("validated in forward");
                let gx = slot(grads, *x, g.shape());
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let dot: f64 = (0..n).map(|j| g.data()[idx(j)] * y.data()[idx(j)]).sum();
                        for j in 0..n {
                            gx.data_mut()[idx(j)] += y.data()[idx(j)] * (g.data()[idx(j)] - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax { x, axis } => {
                let (outer, n, inner) = self.axis_layout(*x, *axis).expect("validated in forward");
                let gx = slot(grads, *x, g.shape());
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * n + j) * inner + i;
                        let gsum: f64 = (0..n).map(|j| g.data()[idx(j)]).sum();
                        for j in 0..n {
                            gx.data_mut()[idx(j)] += g.data()[idx(j)] - y.data()[idx(j)].exp() * gsum;
                        }
                    }
                }
            }
            Op::MaskedSoftmax(x) => {
                let cols = y.cols();
                let gx = slot(grads, *x, g.shape());
                for r in 0..y.rows() {
                    let yr = y.row_slice(r);
                    let gr = g.row_slice(r);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..cols {
                        gx.data_mut()[r * cols + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::Sum(x) => {
                let shape = self.shape(*x).to_vec();
                let d = g.item();
                for o in slot(grads, *x, &shape).data_mut() {
                    *o += d;
                }
            }
            Op::SliceRows { x, start } => {
                let shape = self.shape(*x).to_vec();
                let n = shape[1];
                let gx = slot(grads, *x, &shape);
                for (o, &d) in gx.data_mut()[start * n..].iter_mut().zip(g.data()) {
                    *o += d;
                }
            }
            Op::SliceCols { x, start } => {
                let shape = self.shape(*x).to_vec();
                let (m, n, len) = (shape[0], shape[1], g.cols());
                let gx = slot(grads, *x, &shape);
                for r in 0..m {
                    for c in 0..len {
                        gx.data_mut()[r * n + start + c] += g.data()[r * len + c];
                    }
                }
            }
            Op::ConcatCols(xs) => {
                let (m, total) = (g.rows(), g.cols());
                let mut offset = 0;
                for &x in xs {
                    let shape = self.shape(x).to_vec();
                    let c = shape[1];
                    if self.rg(x) {
                        let gx = slot(grads, x, &shape);
                        for r in 0..m {
                            for j in 0..c {
                                gx.data_mut()[r * c + j] += g.data()[r * total + offset + j];
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let shape = self.shape(x).to_vec();
                    let len = shape[0] * shape[1];
                    if self.rg(x) {
                        let gx = slot(grads, x, &shape);
                        for (o, &d) in gx.data_mut().iter_mut().zip(&g.data()[offset..offset + len]) {
                            *o += d;
                        }
                    }
                    offset += len;
                }
            }
            Op::RepeatRows(x) => {
                let shape = self.shape(*x).to_vec();
                let n = shape[1];
                let gx = slot(grads, *x, &shape);
                for r in 0..g.rows() {
                    for j in 0..n {
                        gx.data_mut()[j] += g.data()[r * n + j];
                    }
                }
            }
            Op::Pick { x, index } => {
                let shape = self.shape(*x).to_vec();
                slot(grads, *x, &shape).data_mut()[*index] += g.item();
            }
        }
    }
}

fn slot<'g>(grads: &'g mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'g mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
