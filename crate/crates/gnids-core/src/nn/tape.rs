//! Reverse-mode gradient tape.
//!
//! Operations are recorded in execution order on a [`Tape`]; [`Tape::backward`]
//! walks the recording in exact reverse order and accumulates gradients into
//! per-node buffers. A tape is single-threaded by design; run one tape per
//! graph and merge gradients in a fixed order for deterministic training.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValueId(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// `[r x k] . [k x c]`
    Matmul(ValueId, ValueId),
    /// `[r x c] + [c]` broadcast over rows
    AddRowBroadcast(ValueId, ValueId),
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Scale(ValueId, f64),
    Relu(ValueId),
    Sigmoid(ValueId),
    Tanh(ValueId),
    ConcatCols(ValueId, ValueId),
    ConcatRows(ValueId, ValueId),
    GatherRows(ValueId, Arc<Vec<usize>>),
    SegmentMean(ValueId, Arc<Vec<usize>>, usize),
    SoftmaxRows(ValueId),
    /// Mean over rows of `-log softmax(logits)[label]`.
    SoftmaxCrossEntropy(ValueId, Arc<Vec<usize>>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded forward computation with reverse-mode backward.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` target with respect to `id`, if any.
    pub fn grad(&self, id: ValueId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Record an input value. Gradients flow into it iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> ValueId {
        let needs = t.requires_grad();
        self.push(t, Op::Leaf, needs)
    }

    /// Record a value that never receives gradient.
    pub fn constant(&mut self, t: Tensor) -> ValueId {
        self.push(t, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> ValueId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        ValueId(self.nodes.len() - 1)
    }

    fn needs(&self, id: ValueId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn record(&mut self, value: Tensor, op: Op, needs_grad: bool, name: &str) -> Result<ValueId> {
        value.assert_finite(name)?;
        Ok(self.push(value, op, needs_grad))
    }

    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() || tb.shape().len() != 2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let out = matmul_nn(ta, tb);
        let needs = self.needs(a) || self.needs(b);
        self.record(out, Op::Matmul(a, b), needs, "matmul")
    }

    pub fn add_row_broadcast(&mut self, x: ValueId, bias: ValueId) -> Result<ValueId> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.shape().len() != 1 || tx.cols() != tb.len() {
            return Err(Error::Shape {
                op: "add_row_broadcast",
                lhs: tx.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let cols = tx.cols();
        let mut out = tx.clone();
        out.set_requires_grad(false);
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += tb.data()[i % cols];
        }
        let needs = self.needs(x) || self.needs(bias);
        self.record(out, Op::AddRowBroadcast(x, bias), needs, "add_row_broadcast")
    }

    fn elementwise(
        &mut self,
        a: ValueId,
        b: ValueId,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape {
                op: name,
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::from_vec(ta.shape(), data)?;
        let needs = self.needs(a) || self.needs(b);
        self.record(out, op, needs, name)
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.elementwise(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.elementwise(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.elementwise(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: ValueId, s: f64) -> Result<ValueId> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| v * s).collect();
        let out = Tensor::from_vec(tx.shape(), data)?;
        let needs = self.needs(x);
        self.record(out, Op::Scale(x, s), needs, "scale")
    }

    fn unary(
        &mut self,
        x: ValueId,
        name: &'static str,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<ValueId> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::from_vec(tx.shape(), data)?;
        let needs = self.needs(x);
        self.record(out, op, needs, name)
    }

    pub fn relu(&mut self, x: ValueId) -> Result<ValueId> {
        self.unary(x, "relu", |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: ValueId) -> Result<ValueId> {
        self.unary(x, "sigmoid", sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: ValueId) -> Result<ValueId> {
        self.unary(x, "tanh", f64::tanh, Op::Tanh(x))
    }

    pub fn concat_cols(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(Error::Shape {
                op: "concat_cols",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (r, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let out = Tensor::from_vec(&[r, ca + cb], data)?;
        let needs = self.needs(a) || self.needs(b);
        self.record(out, Op::ConcatCols(a, b), needs, "concat_cols")
    }

    pub fn concat_rows(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return Err(Error::Shape {
                op: "concat_rows",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        data.extend_from_slice(ta.data());
        data.extend_from_slice(tb.data());
        let out = Tensor::from_vec(&[ta.rows() + tb.rows(), ta.cols()], data)?;
        let needs = self.needs(a) || self.needs(b);
        self.record(out, Op::ConcatRows(a, b), needs, "concat_rows")
    }

    /// Select rows of `x` by index, in index order. Indices may repeat.
    pub fn gather_rows(&mut self, x: ValueId, indices: Arc<Vec<usize>>) -> Result<ValueId> {
        let tx = self.value(x);
        let (rows, cols) = (tx.rows(), tx.cols());
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::Shape {
                op: "gather_rows",
                lhs: tx.shape().to_vec(),
                rhs: vec![bad],
            });
        }
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices.iter() {
            data.extend_from_slice(tx.row(i));
        }
        let out = Tensor::from_vec(&[indices.len(), cols], data)?;
        let needs = self.needs(x);
        self.record(out, Op::GatherRows(x, indices), needs, "gather_rows")
    }

    /// Per-segment element-wise mean of rows. Empty segments yield zero rows.
    pub fn segment_mean(
        &mut self,
        x: ValueId,
        segment_ids: Arc<Vec<usize>>,
        segment_count: usize,
    ) -> Result<ValueId> {
        let tx = self.value(x);
        if segment_ids.len() != tx.rows() {
            return Err(Error::Shape {
                op: "segment_mean",
                lhs: tx.shape().to_vec(),
                rhs: vec![segment_ids.len()],
            });
        }
        if let Some(&bad) = segment_ids.iter().find(|&&s| s >= segment_count) {
            return Err(Error::Usage(format!(
                "segment id {bad} out of range (segment_count {segment_count})"
            )));
        }
        let cols = tx.cols();
        let mut sums = vec![0.0; segment_count * cols];
        let mut counts = vec![0usize; segment_count];
        for (row, &seg) in segment_ids.iter().enumerate() {
            counts[seg] += 1;
            let src = tx.row(row);
            let dst = &mut sums[seg * cols..(seg + 1) * cols];
            dst.iter_mut().zip(src).for_each(|(d, &s)| *d += s);
        }
        for (seg, &count) in counts.iter().enumerate() {
            if count > 1 {
                let inv = 1.0 / count as f64;
                sums[seg * cols..(seg + 1) * cols]
                    .iter_mut()
                    .for_each(|v| *v *= inv);
            }
        }
        let out = Tensor::from_vec(&[segment_count, cols], sums)?;
        let needs = self.needs(x);
        self.record(out, Op::SegmentMean(x, segment_ids, segment_count), needs, "segment_mean")
    }

    pub fn softmax_rows(&mut self, x: ValueId) -> Result<ValueId> {
        let tx = self.value(x);
        let (rows, cols) = (tx.rows(), tx.cols());
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend_from_slice(&softmax_row(tx.row(r)));
        }
        let out = Tensor::from_vec(&[rows, cols], data)?;
        let needs = self.needs(x);
        self.record(out, Op::SoftmaxRows(x), needs, "softmax_rows")
    }

    /// Mean over rows of `-log softmax(logits)[label]`, max-subtracted for
    /// stability. Returns a scalar.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: ValueId,
        labels: Arc<Vec<usize>>,
    ) -> Result<ValueId> {
        let tl = self.value(logits);
        let (rows, cols) = (tl.rows(), tl.cols());
        if labels.len() != rows {
            return Err(Error::Shape {
                op: "softmax_cross_entropy",
                lhs: tl.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= cols) {
            return Err(Error::Usage(format!(
                "label {bad} out of range for {cols} classes"
            )));
        }
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = tl.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[label];
        }
        let out = Tensor::scalar(total / rows as f64);
        let needs = self.needs(logits);
        self.record(out, Op::SoftmaxCrossEntropy(logits, labels), needs, "softmax_cross_entropy")
    }

    /// Reverse-mode sweep from a scalar value.
    ///
    /// Gradients accumulate additively into per-node buffers, traversing the
    /// recording in exact reverse order. Errors if `target` is not a scalar or
    /// has no gradient path to any `requires_grad` leaf.
    pub fn backward(&mut self, target: ValueId) -> Result<()> {
        let node = &self.nodes[target.0];
        if !node.value.is_scalar() {
            return Err(Error::Usage(format!(
                "backward target must be scalar, got shape {:?}",
                node.value.shape()
            )));
        }
        if !node.needs_grad {
            return Err(Error::Usage(
                "backward on a value with no recorded gradient path".into(),
            ));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[target.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=target.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(grad_out) = self.grads[idx].take() else {
                continue;
            };
            let op = self.nodes[idx].op.clone();
            self.propagate(idx, &op, &grad_out)?;
            self.grads[idx] = Some(grad_out);
        }
        Ok(())
    }

    fn accum(&mut self, id: ValueId, delta: &Tensor) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        let slot = &mut self.grads[id.0];
        match slot {
            Some(g) => {
                g.data_mut()
                    .iter_mut()
                    .zip(delta.data())
                    .for_each(|(a, &b)| *a += b);
            }
            None => *slot = Some(delta.clone()),
        }
    }

    fn propagate(&mut self, idx: usize, op: &Op, g: &Tensor) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (ta, tb) = (self.value(*a).clone(), self.value(*b).clone());
                if self.nodes[a.0].needs_grad {
                    let da = matmul_nt(g, &tb);
                    self.accum(*a, &da);
                }
                if self.nodes[b.0].needs_grad {
                    let db = matmul_tn(&ta, g);
                    self.accum(*b, &db);
                }
            }
            Op::AddRowBroadcast(x, bias) => {
                self.accum(*x, g);
                if self.nodes[bias.0].needs_grad {
                    let cols = self.value(*bias).len();
                    let mut db = Tensor::zeros(&[cols]);
                    for (i, &v) in g.data().iter().enumerate() {
                        db.data_mut()[i % cols] += v;
                    }
                    self.accum(*bias, &db);
                }
            }
            Op::Add(a, b) => {
                self.accum(*a, g);
                self.accum(*b, g);
            }
            Op::Sub(a, b) => {
                self.accum(*a, g);
                if self.nodes[b.0].needs_grad {
                    let neg =
                        Tensor::from_vec(g.shape(), g.data().iter().map(|v| -v).collect())?;
                    self.accum(*b, &neg);
                }
            }
            Op::Mul(a, b) => {
                if self.nodes[a.0].needs_grad {
                    let tb = self.value(*b);
                    let da = Tensor::from_vec(
                        g.shape(),
                        g.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect(),
                    )?;
                    self.accum(*a, &da);
                }
                if self.nodes[b.0].needs_grad {
                    let ta = self.value(*a);
                    let db = Tensor::from_vec(
                        g.shape(),
                        g.data().iter().zip(ta.data()).map(|(&x, &y)| x * y).collect(),
                    )?;
                    self.accum(*b, &db);
                }
            }
            Op::Scale(x, s) => {
                let dx =
                    Tensor::from_vec(g.shape(), g.data().iter().map(|v| v * s).collect())?;
                self.accum(*x, &dx);
            }
            Op::Relu(x) => {
                let tx = self.value(*x);
                let dx = Tensor::from_vec(
                    g.shape(),
                    g.data()
                        .iter()
                        .zip(tx.data())
                        .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                        .collect(),
                )?;
                self.accum(*x, &dx);
            }
            Op::Sigmoid(x) => {
                let ty = &self.nodes[idx].value;
                let dx = Tensor::from_vec(
                    g.shape(),
                    g.data()
                        .iter()
                        .zip(ty.data())
                        .map(|(&gv, &yv)| gv * yv * (1.0 - yv))
                        .collect(),
                )?;
                self.accum(*x, &dx);
            }
            Op::Tanh(x) => {
                let ty = &self.nodes[idx].value;
                let dx = Tensor::from_vec(
                    g.shape(),
                    g.data()
                        .iter()
                        .zip(ty.data())
                        .map(|(&gv, &yv)| gv * (1.0 - yv * yv))
                        .collect(),
                )?;
                self.accum(*x, &dx);
            }
            Op::ConcatCols(a, b) => {
                let (ra, ca) = (self.value(*a).rows(), self.value(*a).cols());
                let cb = self.value(*b).cols();
                if self.nodes[a.0].needs_grad {
                    let mut da = Tensor::zeros(&[ra, ca]);
                    for r in 0..ra {
                        let src = &g.row(r)[..ca];
                        da.data_mut()[r * ca..(r + 1) * ca].copy_from_slice(src);
                    }
                    self.accum(*a, &da);
                }
                if self.nodes[b.0].needs_grad {
                    let mut db = Tensor::zeros(&[ra, cb]);
                    for r in 0..ra {
                        let src = &g.row(r)[ca..];
                        db.data_mut()[r * cb..(r + 1) * cb].copy_from_slice(src);
                    }
                    self.accum(*b, &db);
                }
            }
            Op::ConcatRows(a, b) => {
                let (la, sa) = (self.value(*a).len(), self.value(*a).shape().to_vec());
                let sb = self.value(*b).shape().to_vec();
                if self.nodes[a.0].needs_grad {
                    let da = Tensor::from_vec(&sa, g.data()[..la].to_vec())?;
                    self.accum(*a, &da);
                }
                if self.nodes[b.0].needs_grad {
                    let db = Tensor::from_vec(&sb, g.data()[la..].to_vec())?;
                    self.accum(*b, &db);
                }
            }
            Op::GatherRows(x, indices) => {
                if self.nodes[x.0].needs_grad {
                    let (rows, cols) = (self.value(*x).rows(), self.value(*x).cols());
                    let mut dx = Tensor::zeros(&[rows, cols]);
                    for (out_row, &src_row) in indices.iter().enumerate() {
                        let grow = g.row(out_row);
                        let drow = &mut dx.data_mut()[src_row * cols..(src_row + 1) * cols];
                        drow.iter_mut().zip(grow).for_each(|(d, &v)| *d += v);
                    }
                    self.accum(*x, &dx);
                }
            }
            Op::SegmentMean(x, ids, segment_count) => {
                if self.nodes[x.0].needs_grad {
                    let (rows, cols) = (self.value(*x).rows(), self.value(*x).cols());
                    let mut counts = vec![0usize; *segment_count];
                    for &s in ids.iter() {
                        counts[s] += 1;
                    }
                    let mut dx = Tensor::zeros(&[rows, cols]);
                    for (row, &seg) in ids.iter().enumerate() {
                        let inv = 1.0 / counts[seg] as f64;
                        let grow = g.row(seg);
                        let drow = &mut dx.data_mut()[row * cols..(row + 1) * cols];
                        drow.iter_mut().zip(grow).for_each(|(d, &v)| *d += v * inv);
                    }
                    self.accum(*x, &dx);
                }
            }
            Op::SoftmaxRows(x) => {
                if self.nodes[x.0].needs_grad {
                    let ty = &self.nodes[idx].value;
                    let (rows, cols) = (ty.rows(), ty.cols());
                    let mut dx = Tensor::zeros(&[rows, cols]);
                    for r in 0..rows {
                        let y = ty.row(r);
                        let grow = g.row(r);
                        let dot: f64 = y.iter().zip(grow).map(|(&a, &b)| a * b).sum();
                        let drow = &mut dx.data_mut()[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            drow[c] = (grow[c] - dot) * y[c];
                        }
                    }
                    self.accum(*x, &dx);
                }
            }
            Op::SoftmaxCrossEntropy(logits, labels) => {
                if self.nodes[logits.0].needs_grad {
                    let tl = self.value(*logits);
                    let (rows, cols) = (tl.rows(), tl.cols());
                    let upstream = g.scalar_value() / rows as f64;
                    let mut dx = Tensor::zeros(&[rows, cols]);
                    for (r, &label) in labels.iter().enumerate() {
                        let probs = softmax_row(tl.row(r));
                        let drow = &mut dx.data_mut()[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            let indicator = if c == label { 1.0 } else { 0.0 };
                            drow[c] = upstream * (probs[c] - indicator);
                        }
                    }
                    self.accum(*logits, &dx);
                }
            }
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax of one row.
pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `a . b` for row-major 2-D tensors.
pub fn matmul_nn(a: &Tensor, b: &Tensor) -> Tensor {
    let (r, c) = (a.rows(), b.cols());
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let arow = a.row(i);
        let orow = &mut out[i * c..(i + 1) * c];
        for (kk, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b.data()[kk * c..(kk + 1) * c];
            orow.iter_mut().zip(brow).for_each(|(o, &bv)| *o += av * bv);
        }
    }
    Tensor::from_vec(&[r, c], out).expect("shape by construction")
}

/// `a . b^T` where `a` is `[r x k]` and `b` is `[c x k]`.
fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (r, k, c) = (a.rows(), a.cols(), b.rows());
    debug_assert_eq!(k, b.cols());
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let arow = a.row(i);
        let orow = &mut out[i * c..(i + 1) * c];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = b.row(j);
            *o = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    }
    Tensor::from_vec(&[r, c], out).expect("shape by construction")
}

/// `a^T . b` where `a` is `[k x r]` and `b` is `[k x c]`.
fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (k, r, c) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; r * c];
    for kk in 0..k {
        let arow = a.row(kk);
        let brow = b.row(kk);
        for (i, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * c..(i + 1) * c];
            orow.iter_mut().zip(brow).for_each(|(o, &bv)| *o += av * bv);
        }
    }
    Tensor::from_vec(&[r, c], out).expect("shape by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf_grad(tape: &mut Tape, shape: &[usize], data: Vec<f64>) -> ValueId {
        tape.leaf(Tensor::from_vec(shape, data).unwrap().with_grad())
    }

    /// Brute-force triple-loop matmul, independent of the tape kernels.
    fn naive_matmul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += a[i * k + kk] * b[kk * c + j];
                }
                out[i * c + j] = acc;
            }
        }
        out
    }

    #[test]
    fn matmul_matches_naive_oracle() {
        let mut rng = 0x2545f4914f6cdd1du64;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a: Vec<f64> = (0..12).map(|_| next()).collect();
        let b: Vec<f64> = (0..8).map(|_| next()).collect();
        let expected = naive_matmul(&a, &b, 3, 4, 2);

        let mut tape = Tape::new();
        let ia = tape.leaf(Tensor::from_vec(&[3, 4], a).unwrap());
        let ib = tape.leaf(Tensor::from_vec(&[4, 2], b).unwrap());
        let out = tape.matmul(ia, ib).unwrap();
        for (got, want) in tape.value(out).data().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn matmul_shape_error_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[4, 2]));
        match tape.matmul(a, b) {
            Err(Error::Shape { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![4, 2]);
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn backward_sum_of_weights_is_ones() {
        // loss = sum(w) via matmul with a ones column vector
        let mut tape = Tape::new();
        let w = leaf_grad(&mut tape, &[1, 4], vec![0.3, -1.0, 2.0, 5.0]);
        let ones = tape.leaf(Tensor::from_vec(&[4, 1], vec![1.0; 4]).unwrap());
        let loss = tape.matmul(w, ones).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_dot_with_self_is_two_w() {
        // loss = w . w
        let mut tape = Tape::new();
        let w = leaf_grad(&mut tape, &[1, 3], vec![0.5, -2.0, 3.0]);
        let sq = tape.mul(w, w).unwrap();
        let ones = tape.leaf(Tensor::from_vec(&[3, 1], vec![1.0; 3]).unwrap());
        let loss = tape.matmul(sq, ones).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[1.0, -4.0, 6.0]);
    }

    #[test]
    fn backward_without_grad_path_is_usage_error() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(1.0));
        let b = tape.leaf(Tensor::scalar(2.0));
        let c = tape.add(a, b).unwrap();
        assert!(matches!(tape.backward(c), Err(Error::Usage(_))));
    }

    #[test]
    fn segment_mean_examples() {
        let mut tape = Tape::new();
        // one message per segment: output equals input rows
        let x = tape.leaf(Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let out = tape
            .segment_mean(x, Arc::new(vec![0, 1]), 2)
            .unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

        // two messages in one segment: element-wise mean
        let y = tape.leaf(Tensor::from_vec(&[2, 2], vec![1.0, 1.0, 3.0, 3.0]).unwrap());
        let out = tape.segment_mean(y, Arc::new(vec![0, 0]), 1).unwrap();
        assert_eq!(tape.value(out).data(), &[2.0, 2.0]);

        // empty segment: zero row
        let z = tape.leaf(Tensor::from_vec(&[1, 2], vec![5.0, 7.0]).unwrap());
        let out = tape.segment_mean(z, Arc::new(vec![1]), 2).unwrap();
        assert_eq!(tape.value(out).data(), &[0.0, 0.0, 5.0, 7.0]);
    }

    #[test]
    fn segment_mean_matches_loop_oracle() {
        let e = 50;
        let n = 3;
        let segs = 7;
        let mut state = 0xdeadbeefu64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64 - 1.0
        };
        let data: Vec<f64> = (0..e * n).map(|_| next()).collect();
        let ids: Vec<usize> = (0..e).map(|i| (i * 13 + 5) % segs).collect();

        // independent per-segment loop oracle
        let mut expect = vec![0.0; segs * n];
        for s in 0..segs {
            let members: Vec<usize> = (0..e).filter(|&i| ids[i] == s).collect();
            if members.is_empty() {
                continue;
            }
            for c in 0..n {
                let sum: f64 = members.iter().map(|&i| data[i * n + c]).sum();
                expect[s * n + c] = sum / members.len() as f64;
            }
        }

        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[e, n], data).unwrap());
        let out = tape.segment_mean(x, Arc::new(ids), segs).unwrap();
        for (got, want) in tape.value(out).data().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn segment_mean_rejects_out_of_range_id() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[1, 2]));
        assert!(tape.segment_mean(x, Arc::new(vec![3]), 2).is_err());
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_c() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::zeros(&[1, 12]));
        let loss = tape
            .softmax_cross_entropy(logits, Arc::new(vec![3]))
            .unwrap();
        let expected = (12.0f64).ln();
        assert!((tape.value(loss).scalar_value() - expected).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_confident_correct_goes_to_zero() {
        let mut tape = Tape::new();
        let mut row = vec![0.0; 5];
        row[2] = 60.0;
        let logits = tape.leaf(Tensor::from_vec(&[1, 5], row).unwrap());
        let loss = tape
            .softmax_cross_entropy(logits, Arc::new(vec![2]))
            .unwrap();
        assert!(tape.value(loss).scalar_value() < 1e-12);
    }

    #[test]
    fn cross_entropy_matches_direct_formula_oracle() {
        // direct formula with careful (sorted, compensated) summation
        let rows = 6;
        let cols = 9;
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            ((state >> 33) as f64 / (1u64 << 31) as f64 - 1.0) * 4.0
        };
        let data: Vec<f64> = (0..rows * cols).map(|_| next()).collect();
        let labels: Vec<usize> = (0..rows).map(|r| (r * 5 + 1) % cols).collect();

        let mut losses: Vec<f64> = Vec::new();
        for r in 0..rows {
            let row = &data[r * cols..(r + 1) * cols];
            // direct: -log(exp(x_l) / sum exp(x_j)) without max subtraction,
            // summed smallest-first to limit rounding
            let mut exps: Vec<f64> = row.iter().map(|v| v.exp()).collect();
            exps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let denom: f64 = exps.iter().sum();
            losses.push(-(row[labels[r]].exp() / denom).ln());
        }
        losses.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = losses.iter().sum::<f64>() / rows as f64;

        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::from_vec(&[rows, cols], data).unwrap());
        let loss = tape
            .softmax_cross_entropy(logits, Arc::new(labels))
            .unwrap();
        assert!((tape.value(loss).scalar_value() - expected).abs() < 1e-10);
    }

    #[test]
    fn cross_entropy_rejects_out_of_range_label() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::zeros(&[1, 3]));
        assert!(tape
            .softmax_cross_entropy(logits, Arc::new(vec![3]))
            .is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[2, 4], vec![1.0, -2.0, 0.5, 3.0, 100.0, 99.0, 98.0, 0.0]).unwrap());
        let y = tape.softmax_rows(x).unwrap();
        for r in 0..2 {
            let sum: f64 = tape.value(y).row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_clamps_negative() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(&[1, 2], vec![-1.0, 2.0]).unwrap());
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn non_finite_output_is_numeric_error() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(1e308));
        let b = tape.leaf(Tensor::scalar(1e308));
        assert!(matches!(tape.add(a, b), Err(Error::Numeric(_))));
    }
}
