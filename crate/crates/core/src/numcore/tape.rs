use std::sync::Arc;

use rayon::prelude::*;

use crate::numcore::{NumError, SparseMatrix, Tensor};
use crate::scalar::Real;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T: Real> {
    Leaf,
    MatMul(Var, Var),
    SpMM {
        at: Arc<SparseMatrix<T>>,
        x: Var,
    },
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    LeakyRelu(Var, T),
    Elu(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    RowwiseMax {
        x: Var,
        argmax: Vec<usize>,
    },
    RowwiseMean(Var),
    SumAll(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<(usize, usize)>,
        probs: Tensor<T>,
    },
    GatherRows {
        x: Var,
        index: Arc<Vec<usize>>,
    },
    ScatterAddRows {
        x: Var,
        index: Arc<Vec<usize>>,
    },
    SegmentSoftmax {
        x: Var,
        offsets: Arc<Vec<usize>>,
    },
    NeighborMax {
        x: Var,
        // source row per output entry, `usize::MAX` for empty neighborhoods
        argmax: Vec<usize>,
    },
    HeadDot {
        x: Var,
        a: Var,
    },
    HeadScale {
        x: Var,
        s: Var,
    },
    HeadMean {
        x: Var,
        heads: usize,
    },
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Ordered record of primitive operations supporting one reverse sweep.
///
/// Every node's inputs precede it, so walking the node list backwards is a
/// valid reverse topological order.
pub struct Tape<T: Real = f64> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    backward_done: bool,
    kink_margin: Option<T>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
            kink_margin: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Smallest distance of any recorded input to a non-differentiable point
    /// (ReLU/LeakyReLU at zero, ties in max reductions).
    pub fn kink_margin(&self) -> Option<T> {
        self.kink_margin
    }

    /// Clears gradients so `backward` may run again.
    pub fn reset(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn note_kink(&mut self, margin: T) {
        self.kink_margin = Some(match self.kink_margin {
            Some(m) => m.min(margin),
            None => margin,
        });
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let value = matmul(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `a · x` with a constant sparse left operand. `at` must be `aᵀ`.
    pub fn sparse_matmul(&mut self, a: &SparseMatrix<T>, at: Arc<SparseMatrix<T>>, x: Var) -> Result<Var, NumError> {
        if at.rows() != a.cols() || at.cols() != a.rows() {
            return Err(NumError::Shape("transpose operand has the wrong shape".into()));
        }
        let value = a.matmul_dense(self.value(x))?;
        Ok(self.push(value, Op::SpMM { at, x }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(va, vb, "add")?;
        let mut value = va.clone();
        value.add_assign(vb);
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Adds a `1×m` row to every row of an `n×m` operand.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, NumError> {
        let (vx, vr) = (self.value(x), self.value(row));
        if vr.rows() != 1 || vr.cols() != vx.cols() {
            return Err(NumError::Shape(format!(
                "row operand {:?} does not match {:?}",
                vr.shape(),
                vx.shape()
            )));
        }
        let mut value = vx.clone();
        for r in 0..value.rows() {
            for (o, &b) in value.row_mut(r).iter_mut().zip(vr.data()) {
                *o += b;
            }
        }
        Ok(self.push(value, Op::AddRow(x, row)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(va, vb, "mul")?;
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::from_vec(va.rows(), va.cols(), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let value = self.value(x).map(|v| v * s);
        self.push(value, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let margin = vx.data().iter().map(|v| v.abs()).reduce(T::min);
        let value = vx.map(|v| if v > T::zero() { v } else { T::zero() });
        if let Some(m) = margin {
            self.note_kink(m);
        }
        self.push(value, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        let vx = self.value(x);
        let margin = vx.data().iter().map(|v| v.abs()).reduce(T::min);
        let value = vx.map(|v| if v > T::zero() { v } else { v * slope });
        if let Some(m) = margin {
            self.note_kink(m);
        }
        self.push(value, Op::LeakyRelu(x, slope))
    }

    /// ELU with unit scale: `x` for positive inputs, `exp(x) − 1` otherwise.
    pub fn elu(&mut self, x: Var) -> Var {
        let value = self
            .value(x)
            .map(|v| if v > T::zero() { v } else { v.exp() - T::one() });
        self.push(value, Op::Elu(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let value = softmax_rows(self.value(x));
        self.push(value, Op::SoftmaxRows(x))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let first = parts
            .first()
            .ok_or(NumError::EmptyReduction("concat_cols of zero operands"))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(NumError::Shape(format!(
                    "concat_cols row mismatch: {} vs {rows}",
                    v.rows()
                )));
            }
            cols += v.cols();
        }
        let mut value = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut at = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                value.row_mut(r)[at..at + src.len()].copy_from_slice(src);
                at += src.len();
            }
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    /// Per-row maximum as an `n×1` column.
    pub fn rowwise_max(&mut self, x: Var) -> Result<Var, NumError> {
        let vx = self.value(x);
        if vx.cols() == 0 {
            return Err(NumError::EmptyReduction("rowwise_max over zero columns"));
        }
        let argmax = vx.argmax_rows();
        let mut value = Tensor::zeros(vx.rows(), 1);
        let mut margin: Option<T> = None;
        for (r, &c) in argmax.iter().enumerate() {
            let row = vx.row(r);
            value.set(r, 0, row[c]);
            if let Some(second) = second_largest(row, c) {
                let gap = row[c] - second;
                margin = Some(margin.map_or(gap, |m| m.min(gap)));
            }
        }
        if let Some(m) = margin {
            self.note_kink(m);
        }
        Ok(self.push(value, Op::RowwiseMax { x, argmax }))
    }

    /// Per-row mean as an `n×1` column.
    pub fn rowwise_mean(&mut self, x: Var) -> Result<Var, NumError> {
        let vx = self.value(x);
        if vx.cols() == 0 {
            return Err(NumError::EmptyReduction("rowwise_mean over zero columns"));
        }
        let n = T::from_usize(vx.cols()).unwrap();
        let mut value = Tensor::zeros(vx.rows(), 1);
        for r in 0..vx.rows() {
            value.set(r, 0, vx.row(r).iter().copied().sum::<T>() / n);
        }
        Ok(self.push(value, Op::RowwiseMean(x)))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::SumAll(x))
    }

    /// Mean negative log-likelihood of `labels[r]` over the selected `rows`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize], rows: &[usize]) -> Result<Var, NumError> {
        let vl = self.value(logits);
        if rows.is_empty() {
            return Err(NumError::EmptyReduction("cross_entropy over zero rows"));
        }
        let mut targets = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= vl.rows() {
                return Err(NumError::Shape(format!("row {r} outside logits")));
            }
            let y = *labels
                .get(r)
                .ok_or_else(|| NumError::Label(format!("no label for row {r}")))?;
            if y >= vl.cols() {
                return Err(NumError::Label(format!("class {y} outside {} logits", vl.cols())));
            }
            targets.push((r, y));
        }
        let probs = softmax_rows(vl);
        let mut total = T::zero();
        for &(r, y) in &targets {
            total += log_sum_exp(vl.row(r)) - vl.get(r, y);
        }
        let value = Tensor::scalar(total / T::from_usize(targets.len()).unwrap());
        Ok(self.push(value, Op::CrossEntropy { logits, targets, probs }))
    }

    /// `out[e] = x[index[e]]`.
    pub fn gather_rows(&mut self, x: Var, index: Arc<Vec<usize>>) -> Result<Var, NumError> {
        let vx = self.value(x);
        let mut value = Tensor::zeros(index.len(), vx.cols());
        for (e, &src) in index.iter().enumerate() {
            if src >= vx.rows() {
                return Err(NumError::Shape(format!("gather index {src} out of bounds")));
            }
            value.row_mut(e).copy_from_slice(vx.row(src));
        }
        Ok(self.push(value, Op::GatherRows { x, index }))
    }

    /// `out[index[e]] += x[e]` into `rows` output rows.
    pub fn scatter_add_rows(&mut self, x: Var, index: Arc<Vec<usize>>, rows: usize) -> Result<Var, NumError> {
        let vx = self.value(x);
        if index.len() != vx.rows() {
            return Err(NumError::Shape("scatter index length differs from rows".into()));
        }
        let mut value = Tensor::zeros(rows, vx.cols());
        for (e, &dst) in index.iter().enumerate() {
            if dst >= rows {
                return Err(NumError::Shape(format!("scatter index {dst} out of bounds")));
            }
            for (o, &v) in value.row_mut(dst).iter_mut().zip(vx.row(e)) {
                *o += v;
            }
        }
        Ok(self.push(value, Op::ScatterAddRows { x, index }))
    }

    /// Softmax down each column within row groups `[offsets[g], offsets[g+1])`.
    pub fn segment_softmax(&mut self, x: Var, offsets: Arc<Vec<usize>>) -> Result<Var, NumError> {
        let vx = self.value(x);
        if offsets.last().copied() != Some(vx.rows()) {
            return Err(NumError::Shape("segment offsets do not cover all rows".into()));
        }
        let mut value = Tensor::zeros(vx.rows(), vx.cols());
        for g in offsets.windows(2) {
            let (lo, hi) = (g[0], g[1]);
            if lo == hi {
                continue;
            }
            for c in 0..vx.cols() {
                let mut m = vx.get(lo, c);
                for r in lo + 1..hi {
                    m = m.max(vx.get(r, c));
                }
                let mut z = T::zero();
                for r in lo..hi {
                    let e = (vx.get(r, c) - m).exp();
                    value.set(r, c, e);
                    z += e;
                }
                for r in lo..hi {
                    value.set(r, c, value.get(r, c) / z);
                }
            }
        }
        Ok(self.push(value, Op::SegmentSoftmax { x, offsets }))
    }

    /// Per-coordinate maximum of `x` over each row's neighbor set in
    /// `pattern`; rows with no neighbors produce zeros.
    pub fn neighbor_max(&mut self, x: Var, pattern: &SparseMatrix<T>) -> Result<Var, NumError> {
        let vx = self.value(x);
        if pattern.cols() != vx.rows() {
            return Err(NumError::Shape(format!(
                "pattern has {} columns for {} feature rows",
                pattern.cols(),
                vx.rows()
            )));
        }
        let width = vx.cols();
        let mut value = Tensor::zeros(pattern.rows(), width);
        let mut argmax = vec![usize::MAX; pattern.rows() * width];
        let mut margin: Option<T> = None;
        for r in 0..pattern.rows() {
            let (nbrs, _) = pattern.row(r);
            if nbrs.is_empty() {
                continue;
            }
            for c in 0..width {
                let mut best = nbrs[0];
                let mut best_v = vx.get(best, c);
                let mut second: Option<T> = None;
                for &j in &nbrs[1..] {
                    let v = vx.get(j, c);
                    if v > best_v {
                        second = Some(best_v);
                        best = j;
                        best_v = v;
                    } else {
                        second = Some(second.map_or(v, |s| s.max(v)));
                    }
                }
                value.set(r, c, best_v);
                argmax[r * width + c] = best;
                if let Some(s) = second {
                    let gap = best_v - s;
                    margin = Some(margin.map_or(gap, |m| m.min(gap)));
                }
            }
        }
        if let Some(m) = margin {
            self.note_kink(m);
        }
        Ok(self.push(value, Op::NeighborMax { x, argmax }))
    }

    /// Per-head dot product: `x` is `E×(H·C)`, `a` is `H×C`, result `E×H`.
    pub fn head_dot(&mut self, x: Var, a: Var) -> Result<Var, NumError> {
        let (vx, va) = (self.value(x), self.value(a));
        let (heads, width) = va.shape();
        if heads * width != vx.cols() {
            return Err(NumError::Shape(format!(
                "head_dot: {} columns for {heads} heads of width {width}",
                vx.cols()
            )));
        }
        let mut value = Tensor::zeros(vx.rows(), heads);
        for e in 0..vx.rows() {
            let row = vx.row(e);
            for h in 0..heads {
                let mut s = T::zero();
                for c in 0..width {
                    s += row[h * width + c] * va.get(h, c);
                }
                value.set(e, h, s);
            }
        }
        Ok(self.push(value, Op::HeadDot { x, a }))
    }

    /// Scales each head block of `x` (`E×(H·C)`) by `s[e, h]` (`E×H`).
    pub fn head_scale(&mut self, x: Var, s: Var) -> Result<Var, NumError> {
        let (vx, vs) = (self.value(x), self.value(s));
        let heads = vs.cols();
        if vs.rows() != vx.rows() || heads == 0 || vx.cols() % heads != 0 {
            return Err(NumError::Shape(format!(
                "head_scale: {:?} by {:?}",
                vx.shape(),
                vs.shape()
            )));
        }
        let width = vx.cols() / heads;
        let mut value = vx.clone();
        for e in 0..vx.rows() {
            for h in 0..heads {
                let f = vs.get(e, h);
                for v in &mut value.row_mut(e)[h * width..(h + 1) * width] {
                    *v *= f;
                }
            }
        }
        Ok(self.push(value, Op::HeadScale { x, s }))
    }

    /// Averages the `heads` column blocks of `x`.
    pub fn head_mean(&mut self, x: Var, heads: usize) -> Result<Var, NumError> {
        let vx = self.value(x);
        if heads == 0 || !vx.cols().is_multiple_of(heads) {
            return Err(NumError::Shape(format!(
                "head_mean: {} columns not divisible by {heads} heads",
                vx.cols()
            )));
        }
        let width = vx.cols() / heads;
        let inv = T::one() / T::from_usize(heads).unwrap();
        let mut value = Tensor::zeros(vx.rows(), width);
        for r in 0..vx.rows() {
            let row = vx.row(r);
            for c in 0..width {
                let mut s = T::zero();
                for h in 0..heads {
                    s += row[h * width + c];
                }
                value.set(r, c, s * inv);
            }
        }
        Ok(self.push(value, Op::HeadMean { x, heads }))
    }

    /// Reverse sweep from a `1×1` loss. Gradients stay available through
    /// [`Tape::grad`] until [`Tape::reset`].
    pub fn backward(&mut self, loss: Var) -> Result<(), NumError> {
        if self.backward_done {
            return Err(NumError::BackwardTwice);
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(NumError::NotScalar(self.value(loss).shape()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.propagate(node, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        self.grads = grads;
        self.backward_done = true;
        Ok(())
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<(), NumError> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, matmul_nt(g, vb));
                accumulate(grads, *b, matmul_tn(va, g));
            }
            Op::SpMM { at, x } => accumulate(grads, *x, at.matmul_dense(g)?),
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::AddRow(x, row) => {
                let mut db = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, &v) in db.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(grads, *x, g.clone());
                accumulate(grads, *row, db);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, zip_map(g, vb, |d, y| d * y));
                accumulate(grads, *b, zip_map(g, va, |d, x| d * x));
            }
            Op::Scale(x, s) => {
                let s = *s;
                accumulate(grads, *x, g.map(|d| d * s));
            }
            Op::Relu(x) => {
                let dx = zip_map(g, self.value(*x), |d, v| if v > T::zero() { d } else { T::zero() });
                accumulate(grads, *x, dx);
            }
            Op::LeakyRelu(x, slope) => {
                let slope = *slope;
                let dx = zip_map(g, self.value(*x), |d, v| if v > T::zero() { d } else { d * slope });
                accumulate(grads, *x, dx);
            }
            Op::Elu(x) => {
                let dx = zip_map(g, self.value(*x), |d, v| if v > T::zero() { d } else { d * v.exp() });
                accumulate(grads, *x, dx);
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let mut dx = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: T = y.row(r).iter().zip(g.row(r)).map(|(&p, &d)| p * d).sum();
                    for c in 0..y.cols() {
                        dx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::ConcatCols(parts) => {
                let mut at = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut dp = Tensor::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        dp.row_mut(r).copy_from_slice(&g.row(r)[at..at + w]);
                    }
                    accumulate(grads, p, dp);
                    at += w;
                }
            }
            Op::RowwiseMax { x, argmax } => {
                let vx = self.value(*x);
                let mut dx = Tensor::zeros(vx.rows(), vx.cols());
                for (r, &c) in argmax.iter().enumerate() {
                    dx.set(r, c, g.get(r, 0));
                }
                accumulate(grads, *x, dx);
            }
            Op::RowwiseMean(x) => {
                let vx = self.value(*x);
                let n = T::from_usize(vx.cols()).unwrap();
                let mut dx = Tensor::zeros(vx.rows(), vx.cols());
                for r in 0..vx.rows() {
                    let d = g.get(r, 0) / n;
                    dx.row_mut(r).iter_mut().for_each(|v| *v = d);
                }
                accumulate(grads, *x, dx);
            }
            Op::SumAll(x) => {
                let (r, c) = self.value(*x).shape();
                accumulate(grads, *x, Tensor::filled(r, c, g.get(0, 0)));
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let scale = g.get(0, 0) / T::from_usize(targets.len()).unwrap();
                let mut dx = Tensor::zeros(probs.rows(), probs.cols());
                for &(r, y) in targets {
                    for c in 0..probs.cols() {
                        let onehot = if c == y { T::one() } else { T::zero() };
                        let cur = dx.get(r, c);
                        dx.set(r, c, cur + (probs.get(r, c) - onehot) * scale);
                    }
                }
                accumulate(grads, *logits, dx);
            }
            Op::GatherRows { x, index } => {
                let vx = self.value(*x);
                let mut dx = Tensor::zeros(vx.rows(), vx.cols());
                for (e, &src) in index.iter().enumerate() {
                    for (o, &d) in dx.row_mut(src).iter_mut().zip(g.row(e)) {
                        *o += d;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::ScatterAddRows { x, index } => {
                let vx = self.value(*x);
                let mut dx = Tensor::zeros(vx.rows(), vx.cols());
                for (e, &dst) in index.iter().enumerate() {
                    dx.row_mut(e).copy_from_slice(g.row(dst));
                }
                accumulate(grads, *x, dx);
            }
            Op::SegmentSoftmax { x, offsets } => {
                let y = &node.value;
                let mut dx = Tensor::zeros(y.rows(), y.cols());
                for seg in offsets.windows(2) {
                    for c in 0..y.cols() {
                        let dot: T = (seg[0]..seg[1]).map(|r| y.get(r, c) * g.get(r, c)).sum();
                        for r in seg[0]..seg[1] {
                            dx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::NeighborMax { x, argmax } => {
                let vx = self.value(*x);
                let width = vx.cols();
                let mut dx = Tensor::zeros(vx.rows(), width);
                for (flat, &src) in argmax.iter().enumerate() {
                    if src == usize::MAX {
                        continue;
                    }
                    let (r, c) = (flat / width, flat % width);
                    let cur = dx.get(src, c);
                    dx.set(src, c, cur + g.get(r, c));
                }
                accumulate(grads, *x, dx);
            }
            Op::HeadDot { x, a } => {
                let (vx, va) = (self.value(*x), self.value(*a));
                let (heads, width) = va.shape();
                let mut dx = Tensor::zeros(vx.rows(), vx.cols());
                let mut da = Tensor::zeros(heads, width);
                for e in 0..vx.rows() {
                    for h in 0..heads {
                        let d = g.get(e, h);
                        for c in 0..width {
                            let k = h * width + c;
                            dx.set(e, k, d * va.get(h, c));
                            let cur = da.get(h, c);
                            da.set(h, c, cur + d * vx.get(e, k));
                        }
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *a, da);
            }
            Op::HeadScale { x, s } => {
                let (vx, vs) = (self.value(*x), self.value(*s));
                let heads = vs.cols();
                let width = vx.cols() / heads;
                let mut dx = Tensor::zeros(vx.rows(), vx.cols());
                let mut ds = Tensor::zeros(vs.rows(), heads);
                for e in 0..vx.rows() {
                    for h in 0..heads {
                        let f = vs.get(e, h);
                        let mut acc = T::zero();
                        for c in 0..width {
                            let k = h * width + c;
                            dx.set(e, k, g.get(e, k) * f);
                            acc += g.get(e, k) * vx.get(e, k);
                        }
                        ds.set(e, h, acc);
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *s, ds);
            }
            Op::HeadMean { x, heads } => {
                let vx = self.value(*x);
                let width = vx.cols() / heads;
                let inv = T::one() / T::from_usize(*heads).unwrap();
                let mut dx = Tensor::zeros(vx.rows(), vx.cols());
                for r in 0..vx.rows() {
                    for h in 0..*heads {
                        for c in 0..width {
                            dx.set(r, h * width + c, g.get(r, c) * inv);
                        }
                    }
                }
                accumulate(grads, *x, dx);
            }
        }
        Ok(())
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<(), NumError> {
    if a.shape() != b.shape() {
        return Err(NumError::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("shapes checked by caller")
}

fn second_largest<T: Real>(row: &[T], skip: usize) -> Option<T> {
    row.iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, &v)| v)
        .reduce(T::max)
}

fn log_sum_exp<T: Real>(row: &[T]) -> T {
    let m = row.iter().copied().reduce(T::max).unwrap_or_else(T::zero);
    m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln()
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let row = x.row(r);
        let m = row.iter().copied().reduce(T::max).unwrap_or_else(T::zero);
        let mut z = T::zero();
        for (o, &v) in out.row_mut(r).iter_mut().zip(row) {
            *o = (v - m).exp();
            z += *o;
        }
        out.row_mut(r).iter_mut().for_each(|v| *v /= z);
    }
    out
}

/// Dense product `a · b`.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NumError> {
    if a.cols() != b.rows() {
        return Err(NumError::Shape(format!("matmul {:?} x {:?}", a.shape(), b.shape())));
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(n, m);
    if m == 0 {
        return Ok(out);
    }
    out.data_mut().par_chunks_mut(m).enumerate().for_each(|(i, out_row)| {
        let arow = &a.data()[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in out_row.iter_mut().zip(&b.data()[p * m..(p + 1) * m]) {
                *o += av * bv;
            }
        }
    });
    Ok(out)
}

// a · bᵀ
fn matmul_nt<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (n, m) = (a.rows(), b.rows());
    let mut out = Tensor::zeros(n, m);
    if m == 0 {
        return out;
    }
    out.data_mut().par_chunks_mut(m).enumerate().for_each(|(i, out_row)| {
        let arow = a.row(i);
        for (j, o) in out_row.iter_mut().enumerate() {
            *o = arow.iter().zip(b.row(j)).map(|(&x, &y)| x * y).sum();
        }
    });
    out
}

// aᵀ · b
fn matmul_tn<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (k, m) = (a.cols(), b.cols());
    let mut out = Tensor::zeros(k, m);
    for r in 0..a.rows() {
        let (arow, brow) = (a.row(r), b.row(r));
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in out.row_mut(p).iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}
