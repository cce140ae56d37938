use std::sync::Arc;

use super::kernels;
use super::{NumericsError, Real, Result, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow { x: Var, bias: Var },
    Scale(Var, Real),
    MaskedSoftmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, stats: Vec<(Real, Real)> },
    Relu(Var),
    Gelu(Var),
    MaxPool { x: Var, argmax_rows: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, mask: Vec<bool>, count: usize },
    GatherRows { table: Var, ids: Vec<usize> },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    AddScaledRows { h: Var, v: Var, weights: Arc<Vec<Real>> },
    Sum(Var),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::MaskedSoftmax(a)
            | Op::Relu(a)
            | Op::Gelu(a)
            | Op::Sum(a) => vec![*a],
            Op::AddRow { x, bias } => vec![*x, *bias],
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::MaxPool { x, .. } | Op::SliceCols { x, .. } => vec![*x],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::GatherRows { table, .. } => vec![*table],
            Op::ConcatCols(parts) => parts.clone(),
            Op::AddScaledRows { h, v, .. } => vec![*h, *v],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation tape for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so every op's inputs precede it.
/// A graph is built and consumed by one thread; it is `Send` but holds no
/// shared mutable state.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when `v` does not
    /// require gradients.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, detail: String) -> NumericsError {
    NumericsError::Shape { op, detail }
}

fn as_matrix(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite { op: op_name });
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = as_matrix(self.value(a));
        let (k2, n) = as_matrix(self.value(b));
        if k != k2 {
            return Err(shape_err("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push("matmul", Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = as_matrix(self.value(a));
        let out = kernels::transpose(self.value(a).data(), r, c);
        self.push("transpose", Tensor::from_parts(vec![c, r], out), Op::Transpose(a))
    }

    /// Elementwise sum of two tensors with identical shapes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("add", format!("{:?} + {:?}", ta.shape(), tb.shape())));
        }
        let out = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let shape = ta.shape().to_vec();
        self.push("add", Tensor::from_parts(shape, out), Op::Add(a, b))
    }

    /// Adds a length-`d` vector to every row of a `T×d` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tx.cols() != tb.numel() {
            return Err(shape_err("add_row", format!("{:?} + {:?}", tx.shape(), tb.shape())));
        }
        let mut out = tx.data().to_vec();
        kernels::add_row_inplace(&mut out, tb.data());
        let shape = tx.shape().to_vec();
        self.push("add_row", Tensor::from_parts(shape, out), Op::AddRow { x, bias })
    }

    pub fn scale(&mut self, a: Var, s: Real) -> Result<Var> {
        let t = self.value(a);
        let out = t.data().iter().map(|x| x * s).collect();
        let shape = t.shape().to_vec();
        self.push("scale", Tensor::from_parts(shape, out), Op::Scale(a, s))
    }

    /// Row-wise softmax over visible entries. `mask[i*T + j]` is true when
    /// column `j` is visible to row `i`; hidden entries come out exactly 0.
    pub fn masked_softmax_rows(&mut self, s: Var, mask: &[bool]) -> Result<Var> {
        let t = self.value(s);
        let (rows, cols) = as_matrix(t);
        if mask.len() != rows * cols {
            return Err(shape_err("masked_softmax", format!("mask {} vs {rows}x{cols}", mask.len())));
        }
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            let span = i * cols..(i + 1) * cols;
            if !kernels::softmax_visible(&t.data()[span.clone()], &mask[span.clone()], &mut out[span]) {
                return Err(NumericsError::DegenerateRow { row: i });
            }
        }
        self.push("masked_softmax", Tensor::from_parts(vec![rows, cols], out), Op::MaskedSoftmax(s))
    }

    /// Row-wise layer normalization with affine gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: Real) -> Result<Var> {
        if !(eps > 0.0) {
            return Err(NumericsError::BadEpsilon);
        }
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let (rows, d) = as_matrix(tx);
        if d == 0 || tg.numel() != d || tb.numel() != d {
            return Err(shape_err(
                "layer_norm",
                format!("x {:?}, gain {:?}, bias {:?}", tx.shape(), tg.shape(), tb.shape()),
            ));
        }
        let mut out = vec![0.0; rows * d];
        let mut stats = Vec::with_capacity(rows);
        for i in 0..rows {
            stats.push(kernels::layer_norm_row(
                &tx.data()[i * d..(i + 1) * d],
                tg.data(),
                tb.data(),
                eps,
                &mut out[i * d..(i + 1) * d],
            ));
        }
        let shape = tx.shape().to_vec();
        self.push("layer_norm", Tensor::from_parts(shape, out), Op::LayerNorm { x, gain, bias, stats })
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let out = t.data().iter().map(|&v| kernels::relu(v)).collect();
        let shape = t.shape().to_vec();
        self.push("relu", Tensor::from_parts(shape, out), Op::Relu(x))
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let out = t.data().iter().map(|&v| kernels::gelu(v)).collect();
        let shape = t.shape().to_vec();
        self.push("gelu", Tensor::from_parts(shape, out), Op::Gelu(x))
    }

    /// Per-column maximum over the selected rows of a `T×d` matrix.
    ///
    /// Backward routes each column's gradient to its argmax row; ties go to
    /// the lowest row index.
    pub fn max_pool_positions(&mut self, x: Var, positions: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let (rows, d) = as_matrix(t);
        if positions.is_empty() {
            return Err(NumericsError::EmptyPositions);
        }
        if let Some(&pos) = positions.iter().find(|&&p| p >= rows) {
            return Err(NumericsError::PositionOutOfRange { pos, rows });
        }
        let mut sorted = positions.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut out = t.row(sorted[0]).to_vec();
        let mut argmax_rows = vec![sorted[0]; d];
        for &p in &sorted[1..] {
            for (j, &v) in t.row(p).iter().enumerate() {
                if v > out[j] {
                    out[j] = v;
                    argmax_rows[j] = p;
                }
            }
        }
        self.push("max_pool", Tensor::from_parts(vec![d], out), Op::MaxPool { x, argmax_rows })
    }

    /// Mean negative log-likelihood of `targets[t]` under `softmax(logits[t])`
    /// over positions where `mask[t]` is true.
    pub fn cross_entropy_mle(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let t = self.value(logits);
        let (rows, vocab) = as_matrix(t);
        if targets.len() != rows || mask.len() != rows {
            return Err(shape_err(
                "cross_entropy",
                format!("{rows} rows, {} targets, {} mask entries", targets.len(), mask.len()),
            ));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(NumericsError::AllMasked);
        }
        let mut total = 0.0;
        for (i, (&target, &m)) in targets.iter().zip(mask).enumerate() {
            if !m {
                continue;
            }
            if target >= vocab {
                return Err(NumericsError::TargetOutOfRange { target, vocab });
            }
            let row = t.row(i);
            total += kernels::log_sum_exp(row) - row[target];
        }
        let loss = total / count as Real;
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), mask: mask.to_vec(), count };
        self.push("cross_entropy", Tensor::scalar(loss), op)
    }

    /// Selects rows of `table` by index (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (rows, d) = as_matrix(t);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(shape_err("gather_rows", format!("index {id} for {rows} rows")));
            }
            out.extend_from_slice(t.row(id));
        }
        let op = Op::GatherRows { table, ids: ids.to_vec() };
        self.push("gather_rows", Tensor::from_parts(vec![ids.len(), d], out), op)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = as_matrix(t);
        if start + len > cols {
            return Err(shape_err("slice_cols", format!("{start}+{len} > {cols}")));
        }
        let mut out = Vec::with_capacity(rows * len);
        for i in 0..rows {
            out.extend_from_slice(&t.row(i)[start..start + len]);
        }
        self.push("slice_cols", Tensor::from_parts(vec![rows, len], out), Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows());
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(shape_err("concat_cols", "row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        self.push("concat_cols", Tensor::from_parts(vec![rows, cols], out), Op::ConcatCols(parts.to_vec()))
    }

    /// `out[i] = h[i] + weights[i] * v` for a `T×d` matrix `h` and a
    /// length-`d` vector `v`. Rows with weight exactly 0 are copied through
    /// untouched.
    pub fn add_scaled_rows(&mut self, h: Var, v: Var, weights: &[Real]) -> Result<Var> {
        let (th, tv) = (self.value(h), self.value(v));
        let (rows, d) = as_matrix(th);
        if tv.numel() != d || weights.len() != rows {
            return Err(shape_err(
                "add_scaled_rows",
                format!("h {:?}, v {:?}, {} weights", th.shape(), tv.shape(), weights.len()),
            ));
        }
        let mut out = th.data().to_vec();
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &x) in out[i * d..(i + 1) * d].iter_mut().zip(tv.data()) {
                *o += w * x;
            }
        }
        let shape = th.shape().to_vec();
        let op = Op::AddScaledRows { h, v, weights: Arc::new(weights.to_vec()) };
        self.push("add_scaled_rows", Tensor::from_parts(shape, out), op)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x))
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Every node that requires gradients and influences the loss receives
    /// one; leaves recorded without `requires_grad` get none.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if loss_value.numel() != 1 {
            return Err(NumericsError::NotScalar { shape: loss_value.shape().to_vec() });
        }
        for (idx, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if let Some(bad) = node.op.inputs().into_iter().find(|v| v.0 >= idx) {
                return Err(NumericsError::Cycle { node: idx, input: bad.0 });
            }
        }

        let mut grads: Vec<Option<Vec<Real>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &dy, &mut grads);
            grads[idx] = Some(dy);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| {
                if n.requires_grad {
                    Some(Tensor::from_parts(
                        n.value.shape().to_vec(),
                        g.unwrap_or_else(|| vec![0.0; n.value.numel()]),
                    ))
                } else {
                    None
                }
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<Real>>], target: Var, delta: Vec<Real>) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        match &mut grads[target.0] {
            Some(g) => g.iter_mut().zip(&delta).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(delta),
        }
    }

    /// Applies one node's backward rule. `dy` is the upstream gradient.
    fn propagate(&self, node: &Node, dy: &[Real], grads: &mut [Option<Vec<Real>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = as_matrix(val(*a));
                let n = val(*b).cols();
                if needs(*a) {
                    let bt = kernels::transpose(val(*b).data(), k, n);
                    self.accumulate(grads, *a, kernels::matmul(dy, &bt, m, n, k));
                }
                if needs(*b) {
                    let at = kernels::transpose(val(*a).data(), m, k);
                    self.accumulate(grads, *b, kernels::matmul(&at, dy, k, m, n));
                }
            }
            Op::Transpose(a) => {
                let (r, c) = as_matrix(val(*a));
                self.accumulate(grads, *a, kernels::transpose(dy, c, r));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, dy.to_vec());
                self.accumulate(grads, *b, dy.to_vec());
            }
            Op::AddRow { x, bias } => {
                self.accumulate(grads, *x, dy.to_vec());
                if needs(*bias) {
                    let d = val(*bias).numel();
                    let mut db = vec![0.0; d];
                    for row in dy.chunks(d) {
                        db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    self.accumulate(grads, *bias, db);
                }
            }
            Op::Scale(a, s) => {
                self.accumulate(grads, *a, dy.iter().map(|g| g * s).collect());
            }
            Op::MaskedSoftmax(s) => {
                let y = node.value.data();
                let cols = node.value.cols();
                let mut ds = vec![0.0; y.len()];
                for ((dsr, yr), dyr) in ds.chunks_mut(cols).zip(y.chunks(cols)).zip(dy.chunks(cols)) {
                    let dot: Real = yr.iter().zip(dyr).map(|(a, b)| a * b).sum();
                    for j in 0..cols {
                        dsr[j] = yr[j] * (dyr[j] - dot);
                    }
                }
                self.accumulate(grads, *s, ds);
            }
            Op::LayerNorm { x, gain, bias, stats } => {
                let xv = val(*x).data();
                let g = val(*gain).data();
                let d = g.len();
                let mut dx = vec![0.0; xv.len()];
                let mut dg = vec![0.0; d];
                let mut db = vec![0.0; d];
                let mut xhat = vec![0.0; d];
                let mut dxhat = vec![0.0; d];
                for (i, &(mean, rstd)) in stats.iter().enumerate() {
                    let xr = &xv[i * d..(i + 1) * d];
                    let dyr = &dy[i * d..(i + 1) * d];
                    for j in 0..d {
                        xhat[j] = (xr[j] - mean) * rstd;
                        dxhat[j] = dyr[j] * g[j];
                        dg[j] += dyr[j] * xhat[j];
                        db[j] += dyr[j];
                    }
                    let mean_dxhat = dxhat.iter().sum::<Real>() / d as Real;
                    let mean_dxhat_xhat =
                        dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<Real>() / d as Real;
                    for j in 0..d {
                        dx[i * d + j] = rstd * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                    }
                }
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *gain, dg);
                self.accumulate(grads, *bias, db);
            }
            Op::Relu(x) => {
                let dx = val(*x).data().iter().zip(dy).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Gelu(x) => {
                let dx = val(*x).data().iter().zip(dy).map(|(&v, &g)| g * kernels::gelu_grad(v)).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::MaxPool { x, argmax_rows } => {
                let t = val(*x);
                let d = t.cols();
                let mut dx = vec![0.0; t.numel()];
                for (j, &r) in argmax_rows.iter().enumerate() {
                    dx[r * d + j] += dy[j];
                }
                self.accumulate(grads, *x, dx);
            }
            Op::CrossEntropy { logits, targets, mask, count } => {
                let t = val(*logits);
                let vocab = t.cols();
                let scale = dy[0] / *count as Real;
                let mut dl = vec![0.0; t.numel()];
                for (i, (&target, &m)) in targets.iter().zip(mask).enumerate() {
                    if !m {
                        continue;
                    }
                    let row = t.row(i);
                    let lse = kernels::log_sum_exp(row);
                    let out = &mut dl[i * vocab..(i + 1) * vocab];
                    for (o, &z) in out.iter_mut().zip(row) {
                        *o = (z - lse).exp() * scale;
                    }
                    out[target] -= scale;
                }
                self.accumulate(grads, *logits, dl);
            }
            Op::GatherRows { table, ids } => {
                if needs(*table) {
                    let t = val(*table);
                    let d = t.cols();
                    let mut dt = vec![0.0; t.numel()];
                    for (row, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            dt[id * d + j] += dy[row * d + j];
                        }
                    }
                    self.accumulate(grads, *table, dt);
                }
            }
            Op::SliceCols { x, start } => {
                let t = val(*x);
                let (rows, cols) = as_matrix(t);
                let len = node.value.cols();
                let mut dx = vec![0.0; t.numel()];
                for i in 0..rows {
                    dx[i * cols + start..i * cols + start + len].copy_from_slice(&dy[i * len..(i + 1) * len]);
                }
                self.accumulate(grads, *x, dx);
            }
            Op::ConcatCols(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let c = val(p).cols();
                    if needs(p) {
                        let mut dp = Vec::with_capacity(rows * c);
                        for i in 0..rows {
                            dp.extend_from_slice(&dy[i * total + offset..i * total + offset + c]);
                        }
                        self.accumulate(grads, p, dp);
                    }
                    offset += c;
                }
            }
            Op::AddScaledRows { h, v, weights } => {
                self.accumulate(grads, *h, dy.to_vec());
                if needs(*v) {
                    let d = val(*v).numel();
                    let mut dv = vec![0.0; d];
                    for (i, &w) in weights.iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        for j in 0..d {
                            dv[j] += w * dy[i * d + j];
                        }
                    }
                    self.accumulate(grads, *v, dv);
                }
            }
            Op::Sum(x) => {
                let n = val(*x).numel();
                self.accumulate(grads, *x, vec![dy[0]; n]);
            }
        }
    }

    #[cfg(test)]
    fn push_raw_for_test(&mut self, op: Op) -> Var {
        self.nodes.push(Node { value: Tensor::scalar(0.0), op, requires_grad: true });
        Var(self.nodes.len() - 1)
    }
}
