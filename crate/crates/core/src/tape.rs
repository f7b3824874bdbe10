//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value and enough saved
//! state to run its backward rule. Nodes only reference earlier nodes, so the
//! tape is always in topological order and [`Tape::backward`] is a single
//! reverse sweep.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Error, Result};
use crate::tensor::{split_axis, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction used by [`Tape::pool_axis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum PoolMode {
    #[default]
    Max,
    Mean,
}

/// Deliberate corruption of a backward rule, used as a negative control for
/// gradient checking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardFault {
    /// ReLU passes twice the upstream gradient.
    ReluDoubled,
    /// Matrix multiplication drops the gradient for its right operand.
    MatMulRhsZeroed,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    BatchedMatMul(Var, Var),
    TransposeLast2(Var),
    Reshape(Var),
    Conv1x1 { x: Var, w: Var, b: Var },
    RowReduce { m: Var, w: Var, b: Var },
    Pool { x: Var, axis: usize, mode: PoolMode, argmax: Vec<usize> },
    Relu(Var),
    BroadcastMulPixels { x: Var, m: Var },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, batch_stats: bool },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Per-channel batch statistics produced by a training-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Recorded computation. Confined to one thread; use one tape per thread.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    stats: Vec<(Var, BatchStats)>,
    fault: Option<BackwardFault>,
}

/// Result of [`Tape::backward`]: gradient of the loss per recorded node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient for `var`, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_err(op, format!("shapes {:?} and {:?} differ", a.shape(), b.shape())));
    }
    Ok(())
}

fn expect_rank(op: &'static str, t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.rank() != rank {
        return Err(dim_err(op, format!("{what} must have rank {rank}, got shape {:?}", t.shape())));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape whose backward pass applies `fault`.
    pub fn with_fault(fault: BackwardFault) -> Self {
        Tape { fault: Some(fault), ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input tensor. Gradients are reported for every leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Matrix product of `a[m×k]` and `b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        expect_rank("matmul", av, 2, "left operand")?;
        expect_rank("matmul", bv, 2, "right operand")?;
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        if bv.shape()[0] != k {
            return Err(dim_err(
                "matmul",
                format!("inner dimensions differ: {:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm(av.data(), bv.data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// Per-batch matrix product of `a[B×p×q]` and `b[B×q×r]`.
    pub fn batched_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        expect_rank("batched_matmul", av, 3, "left operand")?;
        expect_rank("batched_matmul", bv, 3, "right operand")?;
        let (bs, p, q) = (av.shape()[0], av.shape()[1], av.shape()[2]);
        if bv.shape()[0] != bs || bv.shape()[1] != q {
            return Err(dim_err(
                "batched_matmul",
                format!("incompatible shapes {:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let r = bv.shape()[2];
        let mut out = vec![0.0; bs * p * r];
        for i in 0..bs {
            gemm(
                &av.data()[i * p * q..(i + 1) * p * q],
                &bv.data()[i * q * r..(i + 1) * q * r],
                &mut out[i * p * r..(i + 1) * p * r],
                p,
                q,
                r,
            );
        }
        let value = Tensor::new(vec![bs, p, r], out)?;
        Ok(self.push(value, Op::BatchedMatMul(a, b)))
    }

    /// Swaps the last two axes of a tensor of rank ≥ 2.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() < 2 {
            return Err(dim_err("transpose", format!("rank < 2: {:?}", xv.shape())));
        }
        let value = transpose_last2(xv);
        Ok(self.push(value, Op::TransposeLast2(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Pointwise convolution: `out[n,co,l] = Σ_ci w[co,ci]·x[n,ci,l] + b[co]`.
    pub fn conv1x1(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        expect_rank("conv1x1", xv, 3, "input")?;
        expect_rank("conv1x1", wv, 2, "weight")?;
        let (n, cin, l) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let cout = wv.shape()[0];
        if wv.shape()[1] != cin {
            return Err(dim_err(
                "conv1x1",
                format!("weight {:?} does not accept input channels of {:?}", wv.shape(), xv.shape()),
            ));
        }
        if bv.shape() != [cout] {
            return Err(dim_err(
                "conv1x1",
                format!("bias {:?} does not match weight {:?}", bv.shape(), wv.shape()),
            ));
        }
        let mut out = vec![0.0; n * cout * l];
        for s in 0..n {
            let xs = &xv.data()[s * cin * l..(s + 1) * cin * l];
            let os = &mut out[s * cout * l..(s + 1) * cout * l];
            gemm(wv.data(), xs, os, cout, cin, l);
            for (co, row) in os.chunks_mut(l).enumerate() {
                let bias = bv.data()[co];
                row.iter_mut().for_each(|v| *v += bias);
            }
        }
        let value = Tensor::new(vec![n, cout, l], out)?;
        Ok(self.push(value, Op::Conv1x1 { x, w, b }))
    }

    /// Weighted reduction of the second-to-last axis to size one:
    /// `out[..,0,c] = Σ_r w[r]·m[..,r,c] + b`, with `b` a one-element tensor.
    pub fn row_reduce_conv(&mut self, m: Var, w: Var, b: Var) -> Result<Var> {
        let (mv, wv, bv) = (self.value(m), self.value(w), self.value(b));
        if mv.rank() < 2 {
            return Err(dim_err("row_reduce_conv", format!("rank < 2: {:?}", mv.shape())));
        }
        let rank = mv.rank();
        let (rows, cols) = (mv.shape()[rank - 2], mv.shape()[rank - 1]);
        if wv.shape() != [rows] {
            return Err(dim_err(
                "row_reduce_conv",
                format!("weight {:?} does not match {rows} rows of {:?}", wv.shape(), mv.shape()),
            ));
        }
        if bv.numel() != 1 {
            return Err(dim_err("row_reduce_conv", format!("bias must be scalar, got {:?}", bv.shape())));
        }
        let batch = mv.numel() / (rows * cols);
        let bias = bv.data()[0];
        let mut out = vec![bias; batch * cols];
        for bi in 0..batch {
            let block = &mv.data()[bi * rows * cols..(bi + 1) * rows * cols];
            let o = &mut out[bi * cols..(bi + 1) * cols];
            for (r, row) in block.chunks(cols).enumerate() {
                let wr = wv.data()[r];
                o.iter_mut().zip(row).for_each(|(acc, &v)| *acc += wr * v);
            }
        }
        let mut shape = mv.shape().to_vec();
        shape[rank - 2] = 1;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::RowReduce { m, w, b }))
    }

    /// Reduces `axis` by max or mean and removes it from the shape.
    pub fn pool_axis(&mut self, x: Var, axis: usize, mode: PoolMode) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.rank() {
            return Err(dim_err("pool_axis", format!("axis {axis} invalid for shape {:?}", xv.shape())));
        }
        let (outer, len, inner) = split_axis(xv.shape(), axis);
        let d = xv.data();
        let mut out = vec![0.0; outer * inner];
        let mut argmax = Vec::new();
        match mode {
            PoolMode::Max => {
                argmax = vec![0; outer * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut best = 0;
                        let mut best_v = d[o * len * inner + i];
                        for a in 1..len {
                            let v = d[(o * len + a) * inner + i];
                            if v > best_v {
                                best = a;
                                best_v = v;
                            }
                        }
                        out[o * inner + i] = best_v;
                        argmax[o * inner + i] = best;
                    }
                }
            }
            PoolMode::Mean => {
                for o in 0..outer {
                    for i in 0..inner {
                        let s: f64 = (0..len).map(|a| d[(o * len + a) * inner + i]).sum();
                        out[o * inner + i] = s / len as f64;
                    }
                }
            }
        }
        let mut shape = xv.shape().to_vec();
        shape.remove(axis);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Pool { x, axis, mode, argmax }))
    }

    /// Elementwise `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(value, Op::Relu(x))
    }

    /// `out[n,c,l] = x[n,c,l]·m[n,c]`.
    pub fn broadcast_mul_over_pixels(&mut self, x: Var, m: Var) -> Result<Var> {
        let (xv, mv) = (self.value(x), self.value(m));
        expect_rank("broadcast_mul_over_pixels", xv, 3, "input")?;
        if mv.shape() != &xv.shape()[..2] {
            return Err(dim_err(
                "broadcast_mul_over_pixels",
                format!("multiplier {:?} does not match leading dims of {:?}", mv.shape(), xv.shape()),
            ));
        }
        let l = xv.shape()[2];
        let data = xv.data().iter().enumerate().map(|(i, &v)| v * mv.data()[i / l]).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(value, Op::BroadcastMulPixels { x, m }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let value = self.value(a).zip_with(self.value(b), |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Elementwise product of equal-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let value = self.value(a).zip_with(self.value(b), |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        self.push(value, Op::Scale(x, factor))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x))
    }

    /// Mean over rows of `-log softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        expect_rank("cross_entropy", lv, 2, "logits")?;
        let (n, k) = (lv.shape()[0], lv.shape()[1]);
        if targets.len() != n {
            return Err(dim_err(
                "cross_entropy",
                format!("{} targets for logits {:?}", targets.len(), lv.shape()),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::Label { index: bad, classes: k });
        }
        let mut probs = vec![0.0; n * k];
        let mut total = 0.0;
        for (row, (&t, p)) in lv.data().chunks(k).zip(targets.iter().zip(probs.chunks_mut(k))) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (pj, &v) in p.iter_mut().zip(row) {
                *pj = libm::exp(v - max);
                z += *pj;
            }
            p.iter_mut().for_each(|pj| *pj /= z);
            total += libm::log(z) - (row[t] - max);
        }
        let value = Tensor::scalar(total / n as f64);
        Ok(self.push(value, Op::CrossEntropy { logits, targets: targets.to_vec(), probs }))
    }

    /// Per-channel batch normalization of `x[N×C×L]` over the `N·L` values of
    /// each channel, followed by the affine map `gamma·x̂ + beta`.
    ///
    /// With `fixed = None` the batch statistics are used (training mode) and
    /// can be read back with [`Tape::batch_stats`]; otherwise the given
    /// running statistics are treated as constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        fixed: Option<&BatchStats>,
    ) -> Result<Var> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        expect_rank("batch_norm", xv, 3, "input")?;
        let (n, c, l) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        if gv.shape() != [c] || bv.shape() != [c] {
            return Err(dim_err(
                "batch_norm",
                format!("scale {:?} / shift {:?} do not match {c} channels", gv.shape(), bv.shape()),
            ));
        }
        let count = (n * l) as f64;
        let d = xv.data();
        let (mean, var) = match fixed {
            Some(stats) => {
                if stats.mean.len() != c || stats.var.len() != c {
                    return Err(dim_err("batch_norm", format!("running stats do not cover {c} channels")));
                }
                (stats.mean.clone(), stats.var.clone())
            }
            None => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let vals = (0..n).flat_map(|s| d[(s * c + ch) * l..(s * c + ch + 1) * l].iter());
                    mean[ch] = vals.clone().sum::<f64>() / count;
                    var[ch] = vals.map(|v| (v - mean[ch]) * (v - mean[ch])).sum::<f64>() / count;
                }
                (mean, var)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + eps)).collect();
        let mut xhat = vec![0.0; d.len()];
        let mut out = vec![0.0; d.len()];
        for (i, (&v, (xh, o))) in d.iter().zip(xhat.iter_mut().zip(out.iter_mut())).enumerate() {
            let ch = (i / l) % c;
            *xh = (v - mean[ch]) * inv_std[ch];
            *o = gv.data()[ch] * *xh + bv.data()[ch];
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        let batch_stats = fixed.is_none();
        let node = self.push(value, Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats });
        if batch_stats {
            self.stats.push((node, BatchStats { mean, var }));
        }
        Ok(node)
    }

    /// Batch statistics recorded by a training-mode [`Tape::batch_norm`] node.
    pub fn batch_stats(&self, node: Var) -> Option<&BatchStats> {
        self.stats.iter().find(|(v, _)| *v == node).map(|(_, s)| s)
    }

    /// Reverse sweep from a scalar `loss`, seeding its gradient with 1.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let shapes: Vec<Vec<usize>> = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let grads = grads
            .into_iter()
            .zip(&shapes)
            .map(|(g, s)| g.map(|g| Tensor::new(s.clone(), g).expect("gradient shape")))
            .collect();
        Ok(Gradients { grads, shapes })
    }

    fn backward_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let mut acc = |var: Var, contrib: Vec<f64>| match &mut grads[var.0] {
            Some(existing) => existing.iter_mut().zip(contrib).for_each(|(e, c)| *e += c),
            slot @ None => *slot = Some(contrib),
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let mut da = vec![0.0; m * k];
                gemm_nt(g, bv.data(), &mut da, m, n, k);
                acc(*a, da);
                let mut db = vec![0.0; k * n];
                if self.fault != Some(BackwardFault::MatMulRhsZeroed) {
                    gemm_tn(av.data(), g, &mut db, k, m, n);
                }
                acc(*b, db);
            }
            Op::BatchedMatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (bs, p, q, r) = (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
                let mut da = vec![0.0; bs * p * q];
                let mut db = vec![0.0; bs * q * r];
                for i in 0..bs {
                    let gi = &g[i * p * r..(i + 1) * p * r];
                    gemm_nt(gi, &bv.data()[i * q * r..(i + 1) * q * r], &mut da[i * p * q..(i + 1) * p * q], p, r, q);
                    gemm_tn(&av.data()[i * p * q..(i + 1) * p * q], gi, &mut db[i * q * r..(i + 1) * q * r], q, p, r);
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::TransposeLast2(x) => {
                let gt = Tensor::new(node.value.shape().to_vec(), g.to_vec()).expect("grad shape");
                acc(*x, transpose_last2(&gt).into_data());
            }
            Op::Reshape(x) => acc(*x, g.to_vec()),
            Op::Conv1x1 { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (n, cin, l) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let cout = wv.shape()[0];
                let mut dx = vec![0.0; n * cin * l];
                let mut dw = vec![0.0; cout * cin];
                let mut db = vec![0.0; cout];
                for s in 0..n {
                    let gs = &g[s * cout * l..(s + 1) * cout * l];
                    let xs = &xv.data()[s * cin * l..(s + 1) * cin * l];
                    gemm_tn(wv.data(), gs, &mut dx[s * cin * l..(s + 1) * cin * l], cin, cout, l);
                    gemm_nt(gs, xs, &mut dw, cout, l, cin);
                    for (co, row) in gs.chunks(l).enumerate() {
                        db[co] += row.iter().sum::<f64>();
                    }
                }
                acc(*x, dx);
                acc(*w, dw);
                acc(*b, db);
            }
            Op::RowReduce { m, w, b } => {
                let (mv, wv) = (self.value(*m), self.value(*w));
                let rank = mv.rank();
                let (rows, cols) = (mv.shape()[rank - 2], mv.shape()[rank - 1]);
                let batch = mv.numel() / (rows * cols);
                let mut dm = vec![0.0; mv.numel()];
                let mut dw = vec![0.0; rows];
                for bi in 0..batch {
                    let gb = &g[bi * cols..(bi + 1) * cols];
                    for (r, dwr) in dw.iter_mut().enumerate() {
                        let off = (bi * rows + r) * cols;
                        let mrow = &mv.data()[off..off + cols];
                        for c in 0..cols {
                            dm[off + c] = wv.data()[r] * gb[c];
                            *dwr += gb[c] * mrow[c];
                        }
                    }
                }
                acc(*m, dm);
                acc(*w, dw);
                acc(*b, vec![g.iter().sum()]);
            }
            Op::Pool { x, axis, mode, argmax } => {
                let xv = self.value(*x);
                let (outer, len, inner) = split_axis(xv.shape(), *axis);
                let mut dx = vec![0.0; xv.numel()];
                for o in 0..outer {
                    for i in 0..inner {
                        let go = g[o * inner + i];
                        match mode {
                            PoolMode::Max => dx[(o * len + argmax[o * inner + i]) * inner + i] += go,
                            PoolMode::Mean => {
                                for a in 0..len {
                                    dx[(o * len + a) * inner + i] += go / len as f64;
                                }
                            }
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::Relu(x) => {
                let factor = if self.fault == Some(BackwardFault::ReluDoubled) { 2.0 } else { 1.0 };
                let dx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &gi)| if v > 0.0 { factor * gi } else { 0.0 })
                    .collect();
                acc(*x, dx);
            }
            Op::BroadcastMulPixels { x, m } => {
                let (xv, mv) = (self.value(*x), self.value(*m));
                let l = xv.shape()[2];
                let dx = g.iter().enumerate().map(|(i, &gi)| gi * mv.data()[i / l]).collect();
                let mut dm = vec![0.0; mv.numel()];
                for (i, (&gi, &xi)) in g.iter().zip(xv.data()).enumerate() {
                    dm[i / l] += gi * xi;
                }
                acc(*x, dx);
                acc(*m, dm);
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, g.iter().zip(bv.data()).map(|(gi, bi)| gi * bi).collect());
                acc(*b, g.iter().zip(av.data()).map(|(gi, ai)| gi * ai).collect());
            }
            Op::Scale(x, factor) => acc(*x, g.iter().map(|gi| gi * factor).collect()),
            Op::Sum(x) => acc(*x, vec![g[0]; self.value(*x).numel()]),
            Op::CrossEntropy { logits, targets, probs } => {
                let k = self.value(*logits).shape()[1];
                let n = targets.len() as f64;
                let mut dl: Vec<f64> = probs.iter().map(|p| p * g[0] / n).collect();
                for (row, &t) in targets.iter().enumerate() {
                    dl[row * k + t] -= g[0] / n;
                }
                acc(*logits, dl);
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, batch_stats } => {
                let (xv, gv) = (self.value(*x), self.value(*gamma));
                let (n, c, l) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let count = (n * l) as f64;
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for (i, (&gi, &xh)) in g.iter().zip(xhat).enumerate() {
                    let ch = (i / l) % c;
                    dgamma[ch] += gi * xh;
                    dbeta[ch] += gi;
                }
                let dx = g
                    .iter()
                    .zip(xhat)
                    .enumerate()
                    .map(|(i, (&gi, &xh))| {
                        let ch = (i / l) % c;
                        let scale = gv.data()[ch] * inv_std[ch];
                        if *batch_stats {
                            scale * (gi - dbeta[ch] / count - xh * dgamma[ch] / count)
                        } else {
                            scale * gi
                        }
                    })
                    .collect();
                acc(*x, dx);
                acc(*gamma, dgamma);
                acc(*beta, dbeta);
            }
        }
    }
}

fn transpose_last2(x: &Tensor) -> Tensor {
    let rank = x.rank();
    let (p, q) = (x.shape()[rank - 2], x.shape()[rank - 1]);
    let batch = x.numel() / (p * q);
    let mut out = vec![0.0; x.numel()];
    for b in 0..batch {
        for i in 0..p {
            for j in 0..q {
                out[b * p * q + j * p + i] = x.data()[b * p * q + i * q + j];
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape.swap(rank - 2, rank - 1);
    Tensor::new(shape, out).expect("transpose shape")
}

/// `c[m×n] += a[m×k] · b[k×n]`
fn gemm(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            crow.iter_mut().zip(&b[p * n..(p + 1) * n]).for_each(|(cv, &bv)| *cv += aip * bv);
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`
fn gemm_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += arow.iter().zip(&b[j * k..(j + 1) * k]).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `c[m×n] += a[k×m]ᵀ · b[k×n]`
fn gemm_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == 0.0 {
                continue;
            }
            c[i * n..(i + 1) * n].iter_mut().zip(brow).for_each(|(cv, &bv)| *cv += api * bv);
        }
    }
}
