use std::sync::Arc;

use super::{Tensor, TensorError};

/// Lower/upper clamp applied to probabilities inside [`Tape::bce_loss`].
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to a value recorded on a [`Tape`].
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
    Add(Var, Var),
    AddRowBias(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    LeakyRelu(Var, f64),
    Elu(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    ScaleRows(Var, Var),
    SegmentSoftmax(Var, Arc<[usize]>),
    MeanRows(Var),
    Sum(Var),
    Bce {
        probs: Var,
        targets: Arc<[f64]>,
        mask: Arc<[bool]>,
        count: usize,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records primitive operations in execution order so that a single reverse
/// sweep yields gradients for every leaf.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient for `var`, or zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[var.0]))
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(TensorError::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Adds a length-`cols` bias to every row of `a`.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var, TensorError> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.len() != x.cols() {
            return Err(TensorError::ShapeMismatch {
                op: "add_row_bias",
                left: x.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let mut value = x.clone();
        let cols = x.cols();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += b.data()[i % cols];
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(value, Op::AddRowBias(a, bias), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// `scale · a + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(a).map(|x| scale * x + shift);
        let rg = self.rg(a);
        self.push(value, Op::Affine(a, scale), rg)
    }

    /// Negative inputs (and zero) take the `slope` branch.
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self
            .value(a)
            .map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.rg(a);
        self.push(value, Op::LeakyRelu(a, slope), rg)
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(elu);
        let rg = self.rg(a);
        self.push(value, Op::Elu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    /// Concatenates along the column axis; every input must share the row count.
    pub fn concat_cols(&mut self, inputs: &[Var]) -> Result<Var, TensorError> {
        let rows = inputs.first().map_or(0, |&v| self.value(v).rows());
        for &v in inputs {
            if self.value(v).rows() != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    left: self.value(inputs[0]).shape().to_vec(),
                    right: self.value(v).shape().to_vec(),
                });
            }
        }
        let total: usize = inputs.iter().map(|&v| self.value(v).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &v in inputs {
                data.extend_from_slice(self.value(v).row(r));
            }
        }
        let value = Tensor::new(vec![rows, total], data)?;
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(value, Op::Concat(inputs.to_vec()), rg))
    }

    /// Output row `e` is row `index[e]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var, TensorError> {
        let x = self.value(a);
        let (rows, cols) = (x.rows(), x.cols());
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(TensorError::IndexOutOfRange { index: bad, len: rows });
        }
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            data.extend_from_slice(x.row(i));
        }
        let value = Tensor::new(vec![index.len(), cols], data)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::GatherRows(a, index), rg))
    }

    /// Sums row `e` of `a` into output row `index[e]`; output has `rows` rows.
    pub fn scatter_add_rows(
        &mut self,
        a: Var,
        index: Arc<[usize]>,
        rows: usize,
    ) -> Result<Var, TensorError> {
        let x = self.value(a);
        if index.len() != x.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_add_rows",
                left: x.shape().to_vec(),
                right: vec![index.len()],
            });
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return Err(TensorError::IndexOutOfRange { index: bad, len: rows });
        }
        let cols = x.cols();
        let mut value = Tensor::zeros(&[rows, cols]);
        for (e, &i) in index.iter().enumerate() {
            for (o, v) in value.row_mut(i).iter_mut().zip(x.row(e)) {
                *o += v;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(value, Op::ScatterAddRows(a, index), rg))
    }

    /// Multiplies row `e` of `a` by `weights[e]`.
    pub fn scale_rows(&mut self, a: Var, weights: Var) -> Result<Var, TensorError> {
        let (x, w) = (self.value(a), self.value(weights));
        if w.len() != x.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "scale_rows",
                left: x.shape().to_vec(),
                right: w.shape().to_vec(),
            });
        }
        let mut value = x.clone();
        for (e, &s) in w.data().iter().enumerate() {
            value.row_mut(e).iter_mut().for_each(|v| *v *= s);
        }
        let rg = self.rg(a) || self.rg(weights);
        Ok(self.push(value, Op::ScaleRows(a, weights), rg))
    }

    /// Softmax within each run of equal segment ids. Segment ids must be
    /// non-decreasing and one per logit.
    pub fn segment_softmax(
        &mut self,
        logits: Var,
        segments: Arc<[usize]>,
    ) -> Result<Var, TensorError> {
        let x = self.value(logits);
        if segments.len() != x.len() {
            return Err(TensorError::ShapeMismatch {
                op: "segment_softmax",
                left: x.shape().to_vec(),
                right: vec![segments.len()],
            });
        }
        if segments.windows(2).any(|w| w[0] > w[1]) {
            return Err(TensorError::UnsortedSegments);
        }
        let mut value = x.clone();
        for (start, end) in segment_ranges(&segments) {
            let seg = &mut value.data_mut()[start..end];
            let max = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in seg.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            seg.iter_mut().for_each(|v| *v /= total);
        }
        let rg = self.rg(logits);
        Ok(self.push(value, Op::SegmentSoftmax(logits, segments), rg))
    }

    /// Column-wise mean over rows, giving a `1 × cols` row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let x = self.value(a);
        let (rows, cols) = (x.rows(), x.cols());
        if rows == 0 {
            return Err(TensorError::EmptyReduction);
        }
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            for (o, v) in out.iter_mut().zip(x.row(r)) {
                *o += v;
            }
        }
        let inv = 1.0 / rows as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let value = Tensor::new(vec![1, cols], out)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::MeanRows(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    /// Mean binary cross-entropy over entries where `mask` is set. Probabilities
    /// are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]`.
    pub fn bce_loss(
        &mut self,
        probs: Var,
        targets: Arc<[f64]>,
        mask: Arc<[bool]>,
    ) -> Result<Var, TensorError> {
        let p = self.value(probs);
        if targets.len() != p.len() || mask.len() != p.len() {
            return Err(TensorError::ShapeMismatch {
                op: "bce_loss",
                left: p.shape().to_vec(),
                right: vec![targets.len(), mask.len()],
            });
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(TensorError::EmptyMask);
        }
        let mut total = 0.0;
        for ((&pi, &ti), &mi) in p.data().iter().zip(targets.iter()).zip(mask.iter()) {
            if mi {
                let c = pi.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                total -= ti * c.ln() + (1.0 - ti) * (1.0 - c).ln();
            }
        }
        let value = Tensor::scalar(total / count as f64);
        let rg = self.rg(probs);
        Ok(self.push(
            value,
            Op::Bce {
                probs,
                targets,
                mask,
                count,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let loss_shape = self.value(loss).shape();
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(loss_shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(loss_shape, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut send = |var: Var, contribution: Tensor| {
            if !self.rg(var) {
                return;
            }
            match &mut grads[var.0] {
                Some(existing) => existing.add_assign(&contribution),
                slot @ None => *slot = Some(contribution),
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    send(*a, reshape_like(g.matmul_nt(bv), av));
                }
                if self.rg(*b) {
                    send(*b, reshape_like(av.matmul_tn(g), bv));
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::AddRowBias(a, bias) => {
                send(*a, g.clone());
                if self.rg(*bias) {
                    let bv = self.value(*bias);
                    let cols = bv.len();
                    let mut db = vec![0.0; cols];
                    for (i, v) in g.data().iter().enumerate() {
                        db[i % cols] += v;
                    }
                    send(*bias, reshape_like(Tensor::vector(db), bv));
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                send(*a, g.zip_map(bv, |x, y| x * y));
                send(*b, g.zip_map(av, |x, y| x * y));
            }
            Op::Affine(a, scale) => send(*a, g.map(|x| x * scale)),
            Op::LeakyRelu(a, slope) => {
                let x = self.value(*a);
                send(*a, g.zip_map(x, |gi, xi| if xi > 0.0 { gi } else { gi * slope }));
            }
            Op::Elu(a) => {
                let x = self.value(*a);
                send(*a, g.zip_map(x, |gi, xi| if xi > 0.0 { gi } else { gi * xi.exp() }));
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                send(*a, g.zip_map(y, |gi, yi| gi * yi * (1.0 - yi)));
            }
            Op::Concat(inputs) => {
                let rows = g.rows();
                let total = g.cols();
                let mut offset = 0;
                for &v in inputs {
                    let cols = self.value(v).cols();
                    if self.rg(v) {
                        let mut part = Vec::with_capacity(rows * cols);
                        for r in 0..rows {
                            let start = r * total + offset;
                            part.extend_from_slice(&g.data()[start..start + cols]);
                        }
                        let shape = self.value(v).shape().to_vec();
                        send(v, Tensor::new(shape, part).expect("concat split"));
                    }
                    offset += cols;
                }
            }
            Op::GatherRows(a, index) => {
                let x = self.value(*a);
                let mut dx = Tensor::zeros(x.shape());
                for (e, &i) in index.iter().enumerate() {
                    for (o, v) in dx.row_mut(i).iter_mut().zip(g.row(e)) {
                        *o += v;
                    }
                }
                send(*a, dx);
            }
            Op::ScatterAddRows(a, index) => {
                let x = self.value(*a);
                let mut data = Vec::with_capacity(x.len());
                for &i in index.iter() {
                    data.extend_from_slice(g.row(i));
                }
                send(*a, Tensor::new(x.shape().to_vec(), data).expect("scatter grad"));
            }
            Op::ScaleRows(a, weights) => {
                let (x, w) = (self.value(*a), self.value(*weights));
                if self.rg(*a) {
                    let mut dx = g.clone();
                    for (e, &s) in w.data().iter().enumerate() {
                        dx.row_mut(e).iter_mut().for_each(|v| *v *= s);
                    }
                    send(*a, dx);
                }
                if self.rg(*weights) {
                    let dw: Vec<f64> = (0..x.rows())
                        .map(|e| g.row(e).iter().zip(x.row(e)).map(|(p, q)| p * q).sum())
                        .collect();
                    send(*weights, reshape_like(Tensor::vector(dw), w));
                }
            }
            Op::SegmentSoftmax(a, segments) => {
                let y = &node.value;
                let mut dx = g.clone();
                for (start, end) in segment_ranges(segments) {
                    let dot: f64 = (start..end).map(|e| g.data()[e] * y.data()[e]).sum();
                    for e in start..end {
                        dx.data_mut()[e] = y.data()[e] * (g.data()[e] - dot);
                    }
                }
                send(*a, dx);
            }
            Op::MeanRows(a) => {
                let x = self.value(*a);
                let inv = 1.0 / x.rows() as f64;
                let mut dx = Tensor::zeros(x.shape());
                for r in 0..x.rows() {
                    for (o, v) in dx.row_mut(r).iter_mut().zip(g.data()) {
                        *o = v * inv;
                    }
                }
                send(*a, dx);
            }
            Op::Sum(a) => {
                let x = self.value(*a);
                send(*a, Tensor::full(x.shape(), g.item()));
            }
            Op::Bce {
                probs,
                targets,
                mask,
                count,
            } => {
                let p = self.value(*probs);
                let scale = g.item() / *count as f64;
                let mut dp = Tensor::zeros(p.shape());
                for (i, d) in dp.data_mut().iter_mut().enumerate() {
                    let pi = p.data()[i];
                    if !mask[i] || pi <= PROB_CLAMP || pi >= 1.0 - PROB_CLAMP {
                        continue;
                    }
                    let t = targets[i];
                    *d = scale * (-t / pi + (1.0 - t) / (1.0 - pi));
                }
                send(*probs, dp);
            }
        }
    }
}

fn reshape_like(t: Tensor, like: &Tensor) -> Tensor {
    if t.shape() == like.shape() {
        t
    } else {
        Tensor::new(like.shape().to_vec(), t.into_data()).expect("same element count")
    }
}

/// Half-open index ranges of consecutive equal segment ids.
pub(crate) fn segment_ranges(segments: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=segments.len() {
        if i == segments.len() || segments[i] != segments[start] {
            if i > start {
                out.push((start, i));
            }
            start = i;
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}
