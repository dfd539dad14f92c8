use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{matmul_acc, matmul_nt_acc, matmul_tn_acc};
use super::{AutodiffError, ParamId, ParamStore, Tensor};
use crate::math;

/// Handle to a node on a [`Graph`]. Only meaningful for the graph that
/// created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Concat { parts: Vec<Var>, axis: usize },
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    MeanRows(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Clamp { input: Var, lo: f64, hi: f64 },
    Softmax(Var),
    StandardizeRows { input: Var, inv_std: Vec<f64> },
    SliceRows { input: Var, start: usize },
    GatherRows { input: Var, rows: Vec<usize> },
    Reshape(Var),
    GradReverse { input: Var, phi: f64 },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    grad: Vec<f64>,
    op: Op,
}

/// A computation tape. Nodes are appended in evaluation order, so the
/// node list is always topologically sorted and backward is a single
/// reverse sweep.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<ParamId, Var>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize), AutodiffError> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        _ => Err(AutodiffError::RankMismatch {
            op,
            expected: 2,
            shape: t.shape().to_vec(),
        }),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let n = value.numel();
        self.nodes.push(Node {
            value,
            grad: vec![0.0; n],
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf bound to a stored parameter. Repeated calls within one graph
    /// return the same node so gradients from every use accumulate.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Leaf);
        self.params.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].grad
    }

    fn unary(&mut self, input: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let x = &self.nodes[input.0].value;
        let data = x.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(out, op)
    }

    fn binary_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    /// `a[m×n] + b` with `b` a length-`n` row broadcast over every row.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, n) = rank2("add_row", ta)?;
        if tb.numel() != n || tb.shape().iter().product::<usize>() != n || tb.shape().len() > 2 {
            return Err(mismatch("add_row", ta, tb));
        }
        let mut data = ta.data().to_vec();
        for r in 0..m {
            for (o, &bv) in data[r * n..(r + 1) * n].iter_mut().zip(tb.data()) {
                *o += bv;
            }
        }
        let out = Tensor::new(vec![m, n], data)?;
        Ok(self.push(out, Op::AddRow(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k) = rank2("matmul", ta)?;
        let (k2, n) = rank2("matmul", tb)?;
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(ta.data(), tb.data(), &mut out, m, k, n);
        let out = Tensor::new(vec![m, n], out)?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let ta = &self.nodes[a.0].value;
        let (m, n) = rank2("transpose", ta)?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = ta.data()[i * n + j];
            }
        }
        let out = Tensor::new(vec![n, m], out)?;
        Ok(self.push(out, Op::Transpose(a)))
    }

    /// Concatenate rank-2 tensors along `axis` (0 = stack rows, 1 = join
    /// columns), or rank-1 tensors end to end.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        let first = parts.first().ok_or(AutodiffError::EmptyConcat)?;
        let t0 = &self.nodes[first.0].value;
        let out = match (t0.shape().len(), axis) {
            (1, 0) => {
                let mut data = Vec::new();
                for p in parts {
                    let t = &self.nodes[p.0].value;
                    if t.shape().len() != 1 {
                        return Err(mismatch("concat", t0, t));
                    }
                    data.extend_from_slice(t.data());
                }
                Tensor::vector(data)
            }
            (2, 0) => {
                let cols = t0.shape()[1];
                let mut data = Vec::new();
                let mut rows = 0;
                for p in parts {
                    let t = &self.nodes[p.0].value;
                    if t.shape().len() != 2 || t.shape()[1] != cols {
                        return Err(mismatch("concat", t0, t));
                    }
                    rows += t.shape()[0];
                    data.extend_from_slice(t.data());
                }
                Tensor::new(vec![rows, cols], data)?
            }
            (2, 1) => {
                let rows = t0.shape()[0];
                let mut cols = 0;
                for p in parts {
                    let t = &self.nodes[p.0].value;
                    if t.shape().len() != 2 || t.shape()[0] != rows {
                        return Err(mismatch("concat", t0, t));
                    }
                    cols += t.shape()[1];
                }
                let mut data = vec![0.0; rows * cols];
                let mut offset = 0;
                for p in parts {
                    let t = &self.nodes[p.0].value;
                    let c = t.shape()[1];
                    for r in 0..rows {
                        data[r * cols + offset..r * cols + offset + c]
                            .copy_from_slice(&t.data()[r * c..(r + 1) * c]);
                    }
                    offset += c;
                }
                Tensor::new(vec![rows, cols], data)?
            }
            _ => {
                return Err(AutodiffError::RankMismatch {
                    op: "concat",
                    expected: 2,
                    shape: t0.shape().to_vec(),
                })
            }
        };
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = &self.nodes[a.0].value;
        let s: f64 = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    fn reduce_rows(&mut self, a: Var, mean: bool) -> Result<Var, AutodiffError> {
        let t = &self.nodes[a.0].value;
        let (m, n) = rank2("reduce_rows", t)?;
        let mut out = vec![0.0; n];
        for r in 0..m {
            for (o, &v) in out.iter_mut().zip(t.row_slice(r)) {
                *o += v;
            }
        }
        if mean {
            out.iter_mut().for_each(|o| *o /= m as f64);
        }
        let op = if mean { Op::MeanRows(a) } else { Op::SumRows(a) };
        Ok(self.push(Tensor::row(out), op))
    }

    /// Column sums of a rank-2 tensor, as a `[1, n]` row.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.reduce_rows(a, false)
    }

    /// Column means of a rank-2 tensor, as a `[1, n]` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.reduce_rows(a, true)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, math::sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, math::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, math::softplus, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, math::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, math::ln, Op::Log(a))
    }

    /// Element-wise clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp { input: a, lo, hi })
    }

    /// Softmax along the last axis (each row of a matrix).
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = &self.nodes[a.0].value;
        let n = *t.shape().last().unwrap_or(&1);
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(n.max(1)) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = math::exp(*v - mx);
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let out = Tensor::new(t.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Softmax(a))
    }

    /// Each row of a rank-2 tensor shifted to zero mean and scaled to unit
    /// variance: `(x − μ) / √(σ² + eps)`.
    pub fn standardize_rows(&mut self, a: Var, eps: f64) -> Result<Var, AutodiffError> {
        let t = &self.nodes[a.0].value;
        let (m, n) = rank2("standardize_rows", t)?;
        if n == 0 {
            return Err(AutodiffError::ShapeMismatch {
                op: "standardize_rows",
                left: t.shape().to_vec(),
                right: Vec::new(),
            });
        }
        let mut data = t.data().to_vec();
        let mut inv_std = Vec::with_capacity(m);
        for row in data.chunks_mut(n) {
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let r = 1.0 / math::sqrt(var + eps);
            row.iter_mut().for_each(|v| *v = (*v - mu) * r);
            inv_std.push(r);
        }
        let out = Tensor::new(vec![m, n], data)?;
        Ok(self.push(out, Op::StandardizeRows { input: a, inv_std }))
    }

    /// Rows `start..end` of a rank-2 tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let t = &self.nodes[a.0].value;
        let (m, n) = rank2("slice_rows", t)?;
        if start > end || end > m {
            return Err(AutodiffError::IndexOutOfRange {
                op: "slice_rows",
                index: end,
                len: m,
            });
        }
        let out = Tensor::new(vec![end - start, n], t.data()[start * n..end * n].to_vec())?;
        Ok(self.push(out, Op::SliceRows { input: a, start }))
    }

    /// Select rows by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var, AutodiffError> {
        let t = &self.nodes[a.0].value;
        let (m, n) = rank2("gather_rows", t)?;
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= m {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "gather_rows",
                    index: r,
                    len: m,
                });
            }
            data.extend_from_slice(t.row_slice(r));
        }
        let out = Tensor::new(vec![rows.len(), n], data)?;
        Ok(self.push(
            out,
            Op::GatherRows {
                input: a,
                rows: rows.to_vec(),
            },
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, AutodiffError> {
        let t = &self.nodes[a.0].value;
        let out = Tensor::new(shape.to_vec(), t.data().to_vec())
            .map_err(|_| mismatch("reshape", t, &Tensor::zeros(shape)))?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Identity on the forward pass; multiplies the upstream gradient by
    /// `-phi` on the backward pass.
    pub fn grad_reverse(&mut self, a: Var, phi: f64) -> Result<Var, AutodiffError> {
        if !(phi >= 0.0) {
            return Err(AutodiffError::NegativeScale(phi));
        }
        let out = self.nodes[a.0].value.clone();
        Ok(self.push(out, Op::GradReverse { input: a, phi }))
    }

    /// Populate `grad` on every node reachable from `loss` with
    /// `∂loss/∂node`. Earlier gradients on this tape are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss(
                self.nodes[loss.0].value.shape().to_vec(),
            ));
        }
        for n in &mut self.nodes {
            n.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[loss.0].grad[0] = 1.0;
        for i in (0..=loss.0).rev() {
            if self.nodes[i].grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            self.propagate(i);
        }
        Ok(())
    }

    fn acc(&mut self, target: Var, f: impl FnOnce(&mut [f64])) {
        f(&mut self.nodes[target.0].grad);
    }

    fn propagate(&mut self, i: usize) {
        let op = self.nodes[i].op.clone();
        let g = core::mem::take(&mut self.nodes[i].grad);
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(a, |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                self.acc(b, |gb| gb.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
            }
            Op::AddRow(a, b) => {
                self.acc(a, |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                let n = self.nodes[b.0].grad.len();
                self.acc(b, |gb| {
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Sub(a, b) => {
                self.acc(a, |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
                self.acc(b, |gb| gb.iter_mut().zip(&g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let va = self.nodes[a.0].value.data().to_vec();
                let vb = self.nodes[b.0].value.data().to_vec();
                self.acc(a, |ga| {
                    for ((x, gy), bv) in ga.iter_mut().zip(&g).zip(&vb) {
                        *x += gy * bv;
                    }
                });
                self.acc(b, |gb| {
                    for ((x, gy), av) in gb.iter_mut().zip(&g).zip(&va) {
                        *x += gy * av;
                    }
                });
            }
            Op::Scale(a, c) => {
                self.acc(a, |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += c * y));
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                self.acc(a, |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += y));
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.nodes[a.0].value.dims2().expect("rank 2");
                let n = self.nodes[b.0].value.dims2().expect("rank 2").1;
                let (left, _) = self.nodes.split_at_mut(i);
                if a == b {
                    let va = left[a.0].value.data().to_vec();
                    matmul_nt_acc(&g, &va, &mut left[a.0].grad, m, k, n);
                    matmul_tn_acc(&va, &g, &mut left[a.0].grad, m, k, n);
                } else {
                    let (na, nb) = pair_mut(left, a.0, b.0);
                    matmul_nt_acc(&g, nb.value.data(), &mut na.grad, m, k, n);
                    matmul_tn_acc(na.value.data(), &g, &mut nb.grad, m, k, n);
                }
            }
            Op::Transpose(a) => {
                let (m, n) = self.nodes[a.0].value.dims2().expect("rank 2");
                self.acc(a, |ga| {
                    for r in 0..m {
                        for c in 0..n {
                            ga[r * n + c] += g[c * m + r];
                        }
                    }
                });
            }
            Op::Concat { parts, axis } => {
                let out_shape = self.nodes[i].value.shape().to_vec();
                if out_shape.len() == 1 || axis == 0 {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].grad.len();
                        let src = &g[offset..offset + len];
                        self.acc(p, |gp| gp.iter_mut().zip(src).for_each(|(x, y)| *x += y));
                        offset += len;
                    }
                } else {
                    let (rows, cols) = (out_shape[0], out_shape[1]);
                    let mut offset = 0;
                    for p in parts {
                        let c = self.nodes[p.0].value.shape()[1];
                        self.acc(p, |gp| {
                            for r in 0..rows {
                                for j in 0..c {
                                    gp[r * c + j] += g[r * cols + offset + j];
                                }
                            }
                        });
                        offset += c;
                    }
                }
            }
            Op::Sum(a) => {
                let s = g[0];
                self.acc(a, |ga| ga.iter_mut().for_each(|x| *x += s));
            }
            Op::Mean(a) => {
                let n = self.nodes[a.0].grad.len() as f64;
                let s = g[0] / n;
                self.acc(a, |ga| ga.iter_mut().for_each(|x| *x += s));
            }
            Op::SumRows(a) | Op::MeanRows(a) => {
                let (m, n) = self.nodes[a.0].value.dims2().expect("rank 2");
                let scale = if matches!(op, Op::MeanRows(_)) { 1.0 / m as f64 } else { 1.0 };
                self.acc(a, |ga| {
                    for row in ga.chunks_mut(n) {
                        row.iter_mut().zip(&g).for_each(|(x, y)| *x += scale * y);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[i].value.data().to_vec();
                self.acc(a, |ga| {
                    for ((x, gy), yv) in ga.iter_mut().zip(&g).zip(&y) {
                        *x += gy * yv * (1.0 - yv);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = self.nodes[i].value.data().to_vec();
                self.acc(a, |ga| {
                    for ((x, gy), yv) in ga.iter_mut().zip(&g).zip(&y) {
                        *x += gy * (1.0 - yv * yv);
                    }
                });
            }
            Op::Relu(a) => {
                let xv = self.nodes[a.0].value.data().to_vec();
                self.acc(a, |ga| {
                    for ((x, gy), v) in ga.iter_mut().zip(&g).zip(&xv) {
                        if *v > 0.0 {
                            *x += gy;
                        }
                    }
                });
            }
            Op::Softplus(a) => {
                let xv = self.nodes[a.0].value.data().to_vec();
                self.acc(a, |ga| {
                    for ((x, gy), v) in ga.iter_mut().zip(&g).zip(&xv) {
                        *x += gy * math::sigmoid(*v);
                    }
                });
            }
            Op::Exp(a) => {
                let y = self.nodes[i].value.data().to_vec();
                self.acc(a, |ga| {
                    for ((x, gy), yv) in ga.iter_mut().zip(&g).zip(&y) {
                        *x += gy * yv;
                    }
                });
            }
            Op::Log(a) => {
                let xv = self.nodes[a.0].value.data().to_vec();
                self.acc(a, |ga| {
                    for ((x, gy), v) in ga.iter_mut().zip(&g).zip(&xv) {
                        *x += gy / v;
                    }
                });
            }
            Op::Clamp { input, lo, hi } => {
                let xv = self.nodes[input.0].value.data().to_vec();
                self.acc(input, |ga| {
                    for ((x, gy), v) in ga.iter_mut().zip(&g).zip(&xv) {
                        if *v >= lo && *v <= hi {
                            *x += gy;
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let y = self.nodes[i].value.data().to_vec();
                let n = *self.nodes[i].value.shape().last().unwrap_or(&1);
                self.acc(a, |ga| {
                    for ((gx, gy), yr) in ga.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)) {
                        let dot: f64 = gy.iter().zip(yr).map(|(p, q)| p * q).sum();
                        for ((x, gv), yv) in gx.iter_mut().zip(gy).zip(yr) {
                            *x += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::StandardizeRows { input, inv_std } => {
                let y = self.nodes[i].value.data().to_vec();
                let n = y.len() / inv_std.len().max(1);
                self.acc(input, |ga| {
                    for (((gx, gy), yr), r) in ga.chunks_mut(n).zip(g.chunks(n)).zip(y.chunks(n)).zip(&inv_std) {
                        let mean_g = gy.iter().sum::<f64>() / n as f64;
                        let mean_gy = gy.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / n as f64;
                        for ((x, gv), yv) in gx.iter_mut().zip(gy).zip(yr) {
                            *x += r * (gv - mean_g - yv * mean_gy);
                        }
                    }
                });
            }
            Op::SliceRows { input, start } => {
                let n = self.nodes[input.0].value.dims2().expect("rank 2").1;
                self.acc(input, |ga| {
                    ga[start * n..start * n + g.len()]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(x, y)| *x += y);
                });
            }
            Op::GatherRows { input, rows } => {
                let n = self.nodes[input.0].value.dims2().expect("rank 2").1;
                self.acc(input, |ga| {
                    for (k, &r) in rows.iter().enumerate() {
                        for j in 0..n {
                            ga[r * n + j] += g[k * n + j];
                        }
                    }
                });
            }
            Op::GradReverse { input, phi } => {
                self.acc(input, |ga| ga.iter_mut().zip(&g).for_each(|(x, y)| *x += -phi * y));
            }
        }
        self.nodes[i].grad = g;
    }

    /// Add the gradients of every parameter leaf into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (&id, &v) in &self.params {
            let src = &self.nodes[v.0].grad;
            for (dst, s) in store.get_mut(id).grad.iter_mut().zip(src) {
                *dst += s;
            }
        }
    }

    /// The node bound to a parameter, if it was used on this tape.
    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.params.get(&id).copied()
    }
}

fn pair_mut<T>(xs: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (l, r) = xs.split_at_mut(b);
        (&mut l[a], &mut r[0])
    } else {
        let (l, r) = xs.split_at_mut(a);
        (&mut r[0], &mut l[b])
    }
}
