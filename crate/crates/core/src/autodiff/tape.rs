//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node holding its forward value. Nodes whose
//! inputs all lack gradients are stored as constants, so a forward pass over
//! constant parameters records nothing to differentiate and doubles as plain
//! inference.

use std::sync::Arc;

use super::tensor::{matmul_nn, matmul_nt_acc, matmul_tn_acc, sigmoid, Tensor};
use crate::error::{Error, Result};

/// Shared index list for gather / segment-sum.
pub type Index = Arc<[usize]>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    /// rhs is a single row repeated over the lhs rows
    Row,
    /// rhs is a single column repeated over the lhs columns
    Col,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    Scale(Var, f64),
    Concat(Vec<Var>, usize),
    Gather(Var, Index),
    SegmentSum(Var, Index),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Log(Var),
    Exp(Var),
    Sum(Var),
    LogSumExp(Var, usize),
    Clamp(Var, f64, f64),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every gradient-carrying leaf.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Adds a leaf; it carries gradients iff the tensor is flagged.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let requires_grad = t.requires_grad();
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, t: &Tensor) -> Var {
        self.leaf(t.clone().with_grad(true))
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_grad(false))
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced by {op:?}");
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2("matmul")?;
        let (k2, n) = self.value(b).dims2("matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}, {k}] x [{k2}, {n}]")));
        }
        let out = matmul_nn(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), rg))
    }

    fn bcast(&self, op: &'static str, a: Var, b: Var) -> Result<Bcast> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Ok(Bcast::Same);
        }
        if let [r, c] = *sa {
            if sb == [1, c] || sb == [c] {
                return Ok(Bcast::Row);
            }
            if sb == [r, 1] {
                return Ok(Bcast::Col);
            }
        }
        Err(Error::shape(op, format!("{sa:?} and {sb:?}")))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, Bcast)> {
        let mode = self.bcast(op, a, b)?;
        let ta = self.value(a);
        let (da, tb) = (ta.data(), self.value(b).data());
        let data: Vec<f64> = match mode {
            Bcast::Same => da.iter().zip(tb).map(|(&x, &y)| f(x, y)).collect(),
            Bcast::Row => {
                let c = tb.len();
                let mut v = Vec::with_capacity(da.len());
                for row in da.chunks(c) {
                    v.extend(row.iter().zip(tb).map(|(&x, &y)| f(x, y)));
                }
                v
            }
            Bcast::Col => {
                let c = ta.shape()[1];
                let mut v = Vec::with_capacity(da.len());
                if c > 0 {
                    for (row, &y) in da.chunks(c).zip(tb) {
                        v.extend(row.iter().map(|&x| f(x, y)));
                    }
                }
                v
            }
        };
        Ok((Tensor::new(ta.shape().to_vec(), data)?, mode))
    }

    /// Elementwise sum; `b` may also be one row or one column broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, mode) = self.binary("add", a, b, |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b, mode), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, mode) = self.binary("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b, mode), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, mode) = self.binary("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b, mode), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.map(a, |x| x * s);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// Concatenates matrices along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() || axis > 1 {
            return Err(Error::shape(
                "concat",
                format!("{} parts along axis {axis}", parts.len()),
            ));
        }
        let dims = parts
            .iter()
            .map(|&p| self.value(p).dims2("concat"))
            .collect::<Result<Vec<_>>>()?;
        let out = if axis == 0 {
            let c = dims[0].1;
            if dims.iter().any(|d| d.1 != c) {
                return Err(Error::shape("concat", format!("row concat of {dims:?}")));
            }
            let mut data = Vec::new();
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
            Tensor::matrix(dims.iter().map(|d| d.0).sum(), c, data)?
        } else {
            let r = dims[0].0;
            if dims.iter().any(|d| d.0 != r) {
                return Err(Error::shape("concat", format!("column concat of {dims:?}")));
            }
            let total: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(r * total);
            for i in 0..r {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row_slice(i));
                }
            }
            Tensor::matrix(r, total, data)?
        };
        let rg = self.rg(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), rg))
    }

    /// Row gather: `out[i] = src[index[i]]`.
    pub fn gather(&mut self, src: Var, index: &Index) -> Result<Var> {
        let (r, c) = self.value(src).dims2("gather")?;
        if let Some(&bad) = index.iter().find(|&&i| i >= r) {
            return Err(Error::shape("gather", format!("row {bad} of a [{r}, {c}] source")));
        }
        let s = self.value(src);
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            data.extend_from_slice(s.row_slice(i));
        }
        let out = Tensor::matrix(index.len(), c, data)?;
        let rg = self.rg(&[src]);
        Ok(self.push(out, Op::Gather(src, index.clone()), rg))
    }

    /// Scatter-add: `out[segment[i]] += src[i]`, with `num_segments` rows.
    pub fn segment_sum(&mut self, src: Var, segment: &Index, num_segments: usize) -> Result<Var> {
        let (r, c) = self.value(src).dims2("segment_sum")?;
        if segment.len() != r {
            return Err(Error::shape(
                "segment_sum",
                format!("{} segment ids for {r} rows", segment.len()),
            ));
        }
        if let Some(&bad) = segment.iter().find(|&&s| s >= num_segments) {
            return Err(Error::shape("segment_sum", format!("segment {bad} >= {num_segments}")));
        }
        let s = self.value(src);
        let mut data = vec![0.0; num_segments * c];
        for (i, &seg) in segment.iter().enumerate() {
            let dst = &mut data[seg * c..(seg + 1) * c];
            for (d, &x) in dst.iter_mut().zip(s.row_slice(i)) {
                *d += x;
            }
        }
        let out = Tensor::matrix(num_segments, c, data)?;
        let rg = self.rg(&[src]);
        Ok(self.push(out, Op::SegmentSum(src, segment.clone()), rg))
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(a);
        Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect()).expect("same shape")
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.map(a, f);
        let rg = self.rg(&[a]);
        self.push(out, op, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let c = *t
            .shape()
            .last()
            .ok_or_else(|| Error::shape("softmax", "scalar input"))?;
        let mut out = t.clone().with_grad(false);
        if c > 0 {
            for row in out.data_mut().chunks_mut(c) {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - m).exp();
                    s += *x;
                }
                for x in row.iter_mut() {
                    *x /= s;
                }
            }
        }
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Softmax(a), rg))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// `log Σ exp` of a matrix along `axis`, keeping the reduced axis as size 1.
    pub fn log_sum_exp(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (r, c) = self.value(a).dims2("log_sum_exp")?;
        let t = self.value(a);
        let out = match axis {
            1 => {
                let data = (0..r).map(|i| super::tensor::log_sum_exp(t.row_slice(i))).collect();
                Tensor::matrix(r, 1, data)?
            }
            0 => {
                let data = (0..c)
                    .map(|j| {
                        let col: Vec<f64> = (0..r).map(|i| t.get2(i, j)).collect();
                        super::tensor::log_sum_exp(&col)
                    })
                    .collect();
                Tensor::matrix(1, c, data)?
            }
            _ => return Err(Error::shape("log_sum_exp", format!("axis {axis} of a matrix"))),
        };
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::LogSumExp(a, axis), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
    }

    /// Adds `f(i)` to the adjoint of `v`, allocating it on first touch.
    fn acc_each(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl Fn(usize) -> f64) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(buf) => {
                for (i, x) in buf.iter_mut().enumerate() {
                    *x += f(i);
                }
            }
            slot @ None => *slot = Some((0..self.nodes[v.0].value.numel()).map(f).collect()),
        }
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ta = self.value(*a);
                let tb = self.value(*b);
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                if let Some(ga) = self.acc(grads, *a) {
                    matmul_nt_acc(ga, g, tb.data(), m, k, n);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    matmul_tn_acc(gb, ta.data(), g, m, k, n);
                }
            }
            Op::Add(a, b, mode) | Op::Sub(a, b, mode) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                self.acc_each(grads, *a, |i| g[i]);
                let cols = *node.value.shape().last().unwrap_or(&1);
                if *mode == Bcast::Same {
                    self.acc_each(grads, *b, |i| sign * g[i]);
                } else if let Some(gb) = self.acc(grads, *b) {
                    reduce_into(gb, g, *mode, cols, |gv, _| sign * gv);
                }
            }
            Op::Mul(a, b, mode) => {
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                let cols = *node.value.shape().last().unwrap_or(&1);
                match mode {
                    Bcast::Same => self.acc_each(grads, *a, |i| g[i] * vb[i]),
                    Bcast::Row => self.acc_each(grads, *a, |i| g[i] * vb[i % cols]),
                    Bcast::Col => self.acc_each(grads, *a, |i| g[i] * vb[i / cols]),
                }
                if *mode == Bcast::Same {
                    self.acc_each(grads, *b, |i| g[i] * va[i]);
                } else if let Some(gb) = self.acc(grads, *b) {
                    reduce_into(gb, g, *mode, cols, |gv, idx| gv * va[idx]);
                }
            }
            Op::Scale(a, s) => {
                self.acc_each(grads, *a, |i| s * g[i]);
            }
            Op::Concat(parts, axis) => {
                let total_cols = node.value.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = (self.value(p).shape()[0], self.value(p).shape()[1]);
                    if let Some(gp) = self.acc(grads, p) {
                        if *axis == 0 {
                            for (x, &y) in gp.iter_mut().zip(&g[offset * pc..(offset + pr) * pc]) {
                                *x += y;
                            }
                        } else {
                            for i in 0..pr {
                                let src = &g[i * total_cols + offset..i * total_cols + offset + pc];
                                for (x, &y) in gp[i * pc..(i + 1) * pc].iter_mut().zip(src) {
                                    *x += y;
                                }
                            }
                        }
                    }
                    offset += if *axis == 0 { pr } else { pc };
                }
            }
            Op::Gather(src, index) => {
                let c = node.value.shape()[1];
                if let Some(gs) = self.acc(grads, *src) {
                    for (i, &row) in index.iter().enumerate() {
                        for (x, &y) in gs[row * c..(row + 1) * c].iter_mut().zip(&g[i * c..(i + 1) * c]) {
                            *x += y;
                        }
                    }
                }
            }
            Op::SegmentSum(src, segment) => {
                let c = node.value.shape()[1];
                if let Some(gs) = self.acc(grads, *src) {
                    for (i, &seg) in segment.iter().enumerate() {
                        for (x, &y) in gs[i * c..(i + 1) * c].iter_mut().zip(&g[seg * c..(seg + 1) * c]) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Relu(a) => {
                let va = self.value(*a).data();
                self.acc_each(grads, *a, |i| if va[i] > 0.0 { g[i] } else { 0.0 });
            }
            Op::Sigmoid(a) => {
                self.acc_each(grads, *a, |i| g[i] * out[i] * (1.0 - out[i]));
            }
            Op::Tanh(a) => {
                self.acc_each(grads, *a, |i| g[i] * (1.0 - out[i] * out[i]));
            }
            Op::Log(a) => {
                let va = self.value(*a).data();
                self.acc_each(grads, *a, |i| g[i] / va[i]);
            }
            Op::Exp(a) => {
                self.acc_each(grads, *a, |i| g[i] * out[i]);
            }
            Op::Clamp(a, lo, hi) => {
                let va = self.value(*a).data();
                self.acc_each(grads, *a, |i| if va[i] >= *lo && va[i] <= *hi { g[i] } else { 0.0 });
            }
            Op::Softmax(a) => {
                let c = *node.value.shape().last().unwrap_or(&1);
                if let Some(ga) = self.acc(grads, *a) {
                    for ((gx, gy), y) in ga.chunks_mut(c).zip(g.chunks(c)).zip(out.chunks(c)) {
                        let dot: f64 = gy.iter().zip(y).map(|(a, b)| a * b).sum();
                        for ((x, &gv), &yv) in gx.iter_mut().zip(gy).zip(y) {
                            *x += yv * (gv - dot);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for x in ga.iter_mut() {
                        *x += g[0];
                    }
                }
            }
            Op::LogSumExp(a, axis) => {
                let ta = self.value(*a);
                let c = ta.shape()[1];
                let va = ta.data();
                if let Some(ga) = self.acc(grads, *a) {
                    for (idx, x) in ga.iter_mut().enumerate() {
                        let (i, j) = (idx / c, idx % c);
                        let o = if *axis == 1 { i } else { j };
                        *x += g[o] * (va[idx] - out[o]).exp();
                    }
                }
            }
        }
    }
}

/// Accumulates the adjoint of a (possibly broadcast) rhs operand.
fn reduce_into(gb: &mut [f64], g: &[f64], mode: Bcast, cols: usize, f: impl Fn(f64, usize) -> f64) {
    match mode {
        Bcast::Same => {
            for (idx, x) in gb.iter_mut().enumerate() {
                *x += f(g[idx], idx);
            }
        }
        Bcast::Row => {
            for (idx, &gv) in g.iter().enumerate() {
                gb[idx % cols] += f(gv, idx);
            }
        }
        Bcast::Col => {
            for (idx, &gv) in g.iter().enumerate() {
                gb[idx / cols] += f(gv, idx);
            }
        }
    }
}
