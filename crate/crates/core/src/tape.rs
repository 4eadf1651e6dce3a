//! Reverse-mode autodiff tape.
//!
//! A `Tape` is an append-only operation log: node ids are indices, so the
//! recorded order is already topological and the backward pass is a single
//! reverse sweep that accumulates (never overwrites) gradients. One training
//! step builds and consumes one tape; `backward` may run once per tape.

use alloc::vec::Vec;

use crate::error::{Result, TensorError};
use crate::ops;
use crate::tensor::SpikeTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Conv2d {
        x: NodeId,
        w: NodeId,
        dims: ops::ConvDims,
    },
    DepthwiseConv2d {
        x: NodeId,
        w: NodeId,
        dims: ops::ConvDims,
    },
    PointwiseConv2d {
        x: NodeId,
        w: NodeId,
        plane: usize,
    },
    Linear {
        x: NodeId,
        w: NodeId,
        bias: Option<NodeId>,
        rows: usize,
    },
    GroupNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        groups: usize,
        cache: ops::GroupNormCache,
    },
    Relu {
        x: NodeId,
    },
    Sigmoid {
        x: NodeId,
    },
    Hadamard {
        a: NodeId,
        b: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    ScalarMul {
        x: NodeId,
        c: f32,
    },
    ScalarAdd {
        x: NodeId,
    },
    Gap {
        x: NodeId,
        plane: usize,
    },
    Reshape {
        x: NodeId,
    },
    SumAll {
        x: NodeId,
    },
    MeanAll {
        x: NodeId,
    },
    /// Heaviside spike with a rectangular surrogate derivative.
    Spike {
        u: NodeId,
        threshold: f32,
        width: f32,
    },
    SoftmaxXent {
        logits: NodeId,
        labels: Vec<usize>,
    },
    FocalLoss {
        logits: NodeId,
        target: NodeId,
        norm: f32,
    },
    L1Masked {
        pred: NodeId,
        target: NodeId,
        mask: NodeId,
        norm: f32,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::DepthwiseConv2d { .. } => "depthwise_conv2d",
            Op::PointwiseConv2d { .. } => "pointwise_conv2d",
            Op::Linear { .. } => "linear",
            Op::GroupNorm { .. } => "group_norm",
            Op::Relu { .. } => "relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Hadamard { .. } => "hadamard",
            Op::Add { .. } => "add",
            Op::ScalarMul { .. } => "scalar_mul",
            Op::ScalarAdd { .. } => "scalar_add",
            Op::Gap { .. } => "global_avg_pool",
            Op::Reshape { .. } => "reshape",
            Op::SumAll { .. } => "sum_all",
            Op::MeanAll { .. } => "mean_all",
            Op::Spike { .. } => "spike",
            Op::SoftmaxXent { .. } => "softmax_xent",
            Op::FocalLoss { .. } => "focal_loss",
            Op::L1Masked { .. } => "l1_masked",
        }
    }
}

#[derive(Default)]
pub struct Tape {
    values: Vec<SpikeTensor>,
    ops: Vec<Op>,
    requires_grad: Vec<bool>,
    grads: Vec<Option<Vec<f32>>>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: SpikeTensor, op: Op, requires_grad: bool) -> NodeId {
        #[cfg(debug_assertions)]
        if !value.is_finite() {
            panic!("{}: produced non-finite values", op.name());
        }
        self.values.push(value);
        self.ops.push(op);
        self.requires_grad.push(requires_grad);
        self.grads.push(None);
        NodeId(self.values.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.requires_grad[id.0]
    }

    /// Inserts a tensor as a leaf; gradient participation follows the
    /// tensor's `requires_grad` flag.
    pub fn leaf(&mut self, t: SpikeTensor) -> NodeId {
        let rg = t.requires_grad();
        self.push(t, Op::Leaf, rg)
    }

    /// Inserts a tensor that never receives gradients.
    pub fn constant(&mut self, t: SpikeTensor) -> NodeId {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &SpikeTensor {
        &self.values[id.0]
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.values[id.0].shape()
    }

    /// Gradient buffer for a node, if backward reached it.
    pub fn grad(&self, id: NodeId) -> Option<&[f32]> {
        self.grads[id.0].as_deref()
    }

    pub fn grad_tensor(&self, id: NodeId) -> Option<SpikeTensor> {
        self.grads[id.0]
            .as_ref()
            .map(|g| SpikeTensor::from_vec(self.values[id.0].shape(), g.clone()).unwrap())
    }

    // -- operations ---------------------------------------------------------

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let dims = ops::conv2d_dims(self.shape(x), self.shape(w), stride, pad)?;
        let y = ops::conv2d_forward(self.values[x.0].data(), self.values[w.0].data(), &dims);
        let rg = self.rg(x) || self.rg(w);
        let value = SpikeTensor::from_vec(&[dims.batch, dims.c_out, dims.h_out, dims.w_out], y)?;
        Ok(self.push(value, Op::Conv2d { x, w, dims }, rg))
    }

    pub fn depthwise_conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let dims = ops::depthwise_dims(self.shape(x), self.shape(w), stride, pad)?;
        let y = ops::depthwise_forward(self.values[x.0].data(), self.values[w.0].data(), &dims);
        let rg = self.rg(x) || self.rg(w);
        let value = SpikeTensor::from_vec(&[dims.batch, dims.c_out, dims.h_out, dims.w_out], y)?;
        Ok(self.push(value, Op::DepthwiseConv2d { x, w, dims }, rg))
    }

    pub fn pointwise_conv2d(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 || ws[2] != 1 || ws[3] != 1 || ws[1] != xs[1] {
            return Err(TensorError::ShapeMismatch {
                op: "pointwise_conv2d",
                axis: Some(1),
                expected: vec![ws.first().copied().unwrap_or(0), xs.get(1).copied().unwrap_or(0), 1, 1],
                got: ws,
            });
        }
        let plane = xs[2] * xs[3];
        let y = ops::pointwise_forward(
            self.values[x.0].data(),
            self.values[w.0].data(),
            xs[0],
            xs[1],
            ws[0],
            plane,
        );
        let rg = self.rg(x) || self.rg(w);
        let value = SpikeTensor::from_vec(&[xs[0], ws[0], xs[2], xs[3]], y)?;
        Ok(self.push(value, Op::PointwiseConv2d { x, w, plane }, rg))
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 || xs.is_empty() || *xs.last().unwrap() != ws[1] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                axis: Some(xs.len().saturating_sub(1)),
                expected: vec![ws.get(1).copied().unwrap_or(0)],
                got: vec![xs.last().copied().unwrap_or(0)],
            });
        }
        if let Some(b) = bias {
            if self.shape(b) != [ws[0]] {
                return Err(TensorError::ShapeMismatch {
                    op: "linear(bias)",
                    axis: Some(0),
                    expected: vec![ws[0]],
                    got: self.shape(b).to_vec(),
                });
            }
        }
        let n = ws[1];
        let m = ws[0];
        let rows = self.values[x.0].numel() / n;
        let y = ops::linear_forward(
            self.values[x.0].data(),
            self.values[w.0].data(),
            bias.map(|b| self.values[b.0].data()),
            rows,
            n,
            m,
        );
        let mut out_shape = xs;
        *out_shape.last_mut().unwrap() = m;
        let rg = self.rg(x) || self.rg(w) || bias.map(|b| self.rg(b)).unwrap_or(false);
        let value = SpikeTensor::from_vec(&out_shape, y)?;
        Ok(self.push(value, Op::Linear { x, w, bias, rows }, rg))
    }

    pub fn group_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        groups: usize,
        eps: f32,
    ) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return Err(TensorError::ShapeMismatch {
                op: "group_norm",
                axis: None,
                expected: vec![0, 0, 0, 0],
                got: xs,
            });
        }
        let channels = xs[1];
        if groups == 0 || channels % groups != 0 {
            return Err(TensorError::IndivisibleGroups { channels, groups });
        }
        if self.shape(gamma) != [channels] || self.shape(beta) != [channels] {
            return Err(TensorError::ShapeMismatch {
                op: "group_norm(affine)",
                axis: Some(0),
                expected: vec![channels],
                got: self.shape(gamma).to_vec(),
            });
        }
        let plane = xs[2] * xs[3];
        let (y, cache) = ops::group_norm_forward(
            self.values[x.0].data(),
            self.values[gamma.0].data(),
            self.values[beta.0].data(),
            xs[0],
            channels,
            plane,
            groups,
            eps,
        );
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let value = SpikeTensor::from_vec(&xs, y)?;
        Ok(self.push(value, Op::GroupNorm { x, gamma, beta, groups, cache }, rg))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let y: Vec<f32> = self.values[x.0].data().iter().map(|&v| v.max(0.0)).collect();
        let value = SpikeTensor::from_vec(self.shape(x), y).unwrap();
        let rg = self.rg(x);
        self.push(value, Op::Relu { x }, rg)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y: Vec<f32> = self.values[x.0]
            .data()
            .iter()
            .map(|&v| ops::sigmoid_scalar(v))
            .collect();
        let value = SpikeTensor::from_vec(self.shape(x), y).unwrap();
        let rg = self.rg(x);
        self.push(value, Op::Sigmoid { x }, rg)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out_shape = ops::broadcast_shape("hadamard", self.shape(a), self.shape(b))?;
        let y = ops::broadcast_zip(
            self.values[a.0].data(),
            self.shape(a),
            self.values[b.0].data(),
            self.shape(b),
            &out_shape,
            |x, y| x * y,
        );
        let rg = self.rg(a) || self.rg(b);
        let value = SpikeTensor::from_vec(&out_shape, y)?;
        Ok(self.push(value, Op::Hadamard { a, b }, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out_shape = ops::broadcast_shape("add", self.shape(a), self.shape(b))?;
        let y = ops::broadcast_zip(
            self.values[a.0].data(),
            self.shape(a),
            self.values[b.0].data(),
            self.shape(b),
            &out_shape,
            |x, y| x + y,
        );
        let rg = self.rg(a) || self.rg(b);
        let value = SpikeTensor::from_vec(&out_shape, y)?;
        Ok(self.push(value, Op::Add { a, b }, rg))
    }

    pub fn scalar_mul(&mut self, x: NodeId, c: f32) -> NodeId {
        let y: Vec<f32> = self.values[x.0].data().iter().map(|&v| v * c).collect();
        let value = SpikeTensor::from_vec(self.shape(x), y).unwrap();
        let rg = self.rg(x);
        self.push(value, Op::ScalarMul { x, c }, rg)
    }

    pub fn scalar_add(&mut self, x: NodeId, c: f32) -> NodeId {
        let y: Vec<f32> = self.values[x.0].data().iter().map(|&v| v + c).collect();
        let value = SpikeTensor::from_vec(self.shape(x), y).unwrap();
        let rg = self.rg(x);
        self.push(value, Op::ScalarAdd { x }, rg)
    }

    /// Global average pool: `[B,C,H,W] -> [B,C]`.
    pub fn gap(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return Err(TensorError::ShapeMismatch {
                op: "global_avg_pool",
                axis: None,
                expected: vec![0, 0, 0, 0],
                got: xs,
            });
        }
        let plane = xs[2] * xs[3];
        let data = self.values[x.0].data();
        let mut y = vec![0.0f32; xs[0] * xs[1]];
        for (i, yv) in y.iter_mut().enumerate() {
            *yv = data[i * plane..(i + 1) * plane].iter().sum::<f32>() / plane as f32;
        }
        let rg = self.rg(x);
        let value = SpikeTensor::from_vec(&[xs[0], xs[1]], y)?;
        Ok(self.push(value, Op::Gap { x, plane }, rg))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.values[x.0].reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s: f32 = self.values[x.0].data().iter().sum();
        let rg = self.rg(x);
        self.push(SpikeTensor::scalar(s), Op::SumAll { x }, rg)
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let n = self.values[x.0].numel() as f32;
        let s: f32 = self.values[x.0].data().iter().sum::<f32>() / n;
        let rg = self.rg(x);
        self.push(SpikeTensor::scalar(s), Op::MeanAll { x }, rg)
    }

    /// Heaviside threshold: 1.0 where `u >= threshold`. The backward pass
    /// substitutes the rectangular window `(1/width)·1[|u - threshold| <= width/2]`.
    pub fn spike(&mut self, u: NodeId, threshold: f32, width: f32) -> NodeId {
        let y: Vec<f32> = self.values[u.0]
            .data()
            .iter()
            .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
            .collect();
        let value = SpikeTensor::from_vec(self.shape(u), y).unwrap();
        let rg = self.rg(u);
        self.push(value, Op::Spike { u, threshold, width }, rg)
    }

    /// Mean cross-entropy between `logits [B,K]` and integer labels.
    pub fn softmax_xent(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let ls = self.shape(logits).to_vec();
        if ls.len() != 2 || ls[0] != labels.len() {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_xent",
                axis: Some(0),
                expected: vec![labels.len(), ls.get(1).copied().unwrap_or(0)],
                got: ls,
            });
        }
        let k = ls[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::Invalid(alloc::format!(
                "softmax_xent: label {bad} out of range for {k} classes"
            )));
        }
        let data = self.values[logits.0].data();
        let mut total = 0.0f64;
        for (r, &label) in labels.iter().enumerate() {
            let row = &data[r * k..(r + 1) * k];
            let m = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let lse = m + libm::logf(row.iter().map(|&z| libm::expf(z - m)).sum::<f32>());
            total += (lse - row[label]) as f64;
        }
        let value = SpikeTensor::scalar((total / labels.len() as f64) as f32);
        let rg = self.rg(logits);
        Ok(self.push(
            value,
            Op::SoftmaxXent { logits, labels: labels.to_vec() },
            rg,
        ))
    }

    /// Penalty-reduced focal loss on a sigmoid heatmap. `target` holds 1.0 at
    /// object centers and Gaussian-decayed values elsewhere; normalization is
    /// by the number of centers (min 1).
    pub fn focal_loss(&mut self, logits: NodeId, target: NodeId) -> Result<NodeId> {
        if self.shape(logits) != self.shape(target) {
            return Err(TensorError::ShapeMismatch {
                op: "focal_loss",
                axis: None,
                expected: self.shape(target).to_vec(),
                got: self.shape(logits).to_vec(),
            });
        }
        let z = self.values[logits.0].data();
        let y = self.values[target.0].data();
        let n_pos = y.iter().filter(|&&v| v == 1.0).count().max(1) as f32;
        let mut total = 0.0f64;
        for (&zi, &yi) in z.iter().zip(y) {
            let p = ops::sigmoid_scalar(zi);
            let ln_p = -ops::softplus(-zi);
            let ln_1mp = -ops::softplus(zi);
            let term = if yi == 1.0 {
                (1.0 - p) * (1.0 - p) * ln_p
            } else {
                let w = (1.0 - yi) * (1.0 - yi);
                w * w * p * p * ln_1mp
            };
            total -= term as f64;
        }
        let value = SpikeTensor::scalar((total / n_pos as f64) as f32);
        let rg = self.rg(logits);
        Ok(self.push(value, Op::FocalLoss { logits, target, norm: n_pos }, rg))
    }

    /// Mean absolute error over masked entries, divided by `norm`.
    pub fn l1_masked(&mut self, pred: NodeId, target: NodeId, mask: NodeId, norm: f32) -> Result<NodeId> {
        if self.shape(pred) != self.shape(target) || self.shape(pred) != self.shape(mask) {
            return Err(TensorError::ShapeMismatch {
                op: "l1_masked",
                axis: None,
                expected: self.shape(pred).to_vec(),
                got: self.shape(target).to_vec(),
            });
        }
        let p = self.values[pred.0].data();
        let t = self.values[target.0].data();
        let m = self.values[mask.0].data();
        let total: f64 = p
            .iter()
            .zip(t)
            .zip(m)
            .map(|((pv, tv), mv)| (mv * (pv - tv).abs()) as f64)
            .sum();
        let value = SpikeTensor::scalar((total / norm as f64) as f32);
        let rg = self.rg(pred);
        Ok(self.push(value, Op::L1Masked { pred, target, mask, norm }, rg))
    }

    // -- backward ------------------------------------------------------------

    /// Reverse sweep from a scalar loss; fills gradients of every
    /// grad-requiring node reachable from it. Errors on a non-scalar loss, a
    /// detached loss, or a second call on the same tape.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.consumed {
            return Err(TensorError::BackwardConsumed);
        }
        let numel = self.values[loss.0].numel();
        if numel != 1 {
            return Err(TensorError::NonScalarLoss { numel });
        }
        if !self.rg(loss) {
            return Err(TensorError::Detached { node: loss.0 });
        }
        self.consumed = true;
        self.grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            if self.grads[id].is_none() || !self.requires_grad[id] {
                continue;
            }
            // inputs always precede the node, so split to borrow dy and
            // earlier grads simultaneously
            let (earlier, at) = self.grads.split_at_mut(id);
            let dy = at[0].as_ref().unwrap();
            let values = &self.values;
            let rg = &self.requires_grad;
            let mut give = |nid: NodeId, contrib: Vec<f32>| {
                if !rg[nid.0] {
                    return;
                }
                match &mut earlier[nid.0] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(&contrib) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &self.ops[id] {
                Op::Leaf => {}
                Op::Conv2d { x, w, dims } => {
                    if rg[x.0] {
                        give(*x, ops::conv2d_backward_input(dy, values[w.0].data(), dims));
                    }
                    if rg[w.0] {
                        give(*w, ops::conv2d_backward_weight(dy, values[x.0].data(), dims));
                    }
                }
                Op::DepthwiseConv2d { x, w, dims } => {
                    if rg[x.0] {
                        give(*x, ops::depthwise_backward_input(dy, values[w.0].data(), dims));
                    }
                    if rg[w.0] {
                        give(*w, ops::depthwise_backward_weight(dy, values[x.0].data(), dims));
                    }
                }
                Op::PointwiseConv2d { x, w, plane } => {
                    let xs = values[x.0].shape();
                    let (b, cin) = (xs[0], xs[1]);
                    let cout = values[w.0].shape()[0];
                    if rg[x.0] {
                        give(
                            *x,
                            ops::pointwise_backward_input(dy, values[w.0].data(), b, cin, cout, *plane),
                        );
                    }
                    if rg[w.0] {
                        give(
                            *w,
                            ops::pointwise_backward_weight(dy, values[x.0].data(), b, cin, cout, *plane),
                        );
                    }
                }
                Op::Linear { x, w, bias, rows } => {
                    let ws = values[w.0].shape();
                    let (m, n) = (ws[0], ws[1]);
                    if rg[x.0] {
                        give(*x, ops::linear_backward_input(dy, values[w.0].data(), *rows, n, m));
                    }
                    if rg[w.0] {
                        give(*w, ops::linear_backward_weight(dy, values[x.0].data(), *rows, n, m));
                    }
                    if let Some(b) = bias {
                        if rg[b.0] {
                            give(*b, ops::linear_backward_bias(dy, *rows, m));
                        }
                    }
                }
                Op::GroupNorm { x, gamma, beta, groups, cache } => {
                    let xs = values[x.0].shape();
                    let (dx, dgamma, dbeta) = ops::group_norm_backward(
                        dy,
                        values[x.0].data(),
                        values[gamma.0].data(),
                        cache,
                        xs[0],
                        xs[1],
                        xs[2] * xs[3],
                        *groups,
                    );
                    if rg[x.0] {
                        give(*x, dx);
                    }
                    if rg[gamma.0] {
                        give(*gamma, dgamma);
                    }
                    if rg[beta.0] {
                        give(*beta, dbeta);
                    }
                }
                Op::Relu { x } => {
                    let dx = values[x.0]
                        .data()
                        .iter()
                        .zip(dy)
                        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                        .collect();
                    give(*x, dx);
                }
                Op::Sigmoid { x } => {
                    let s = values[id].data();
                    let dx = s.iter().zip(dy).map(|(&sv, &g)| g * sv * (1.0 - sv)).collect();
                    give(*x, dx);
                }
                Op::Hadamard { a, b } => {
                    let out_shape = values[id].shape();
                    if rg[a.0] {
                        let da_full = ops::broadcast_zip(
                            dy,
                            out_shape,
                            values[b.0].data(),
                            values[b.0].shape(),
                            out_shape,
                            |g, bv| g * bv,
                        );
                        give(*a, ops::reduce_to_shape(&da_full, out_shape, values[a.0].shape()));
                    }
                    if rg[b.0] {
                        let db_full = ops::broadcast_zip(
                            dy,
                            out_shape,
                            values[a.0].data(),
                            values[a.0].shape(),
                            out_shape,
                            |g, av| g * av,
                        );
                        give(*b, ops::reduce_to_shape(&db_full, out_shape, values[b.0].shape()));
                    }
                }
                Op::Add { a, b } => {
                    let out_shape = values[id].shape();
                    if rg[a.0] {
                        give(*a, ops::reduce_to_shape(dy, out_shape, values[a.0].shape()));
                    }
                    if rg[b.0] {
                        give(*b, ops::reduce_to_shape(dy, out_shape, values[b.0].shape()));
                    }
                }
                Op::ScalarMul { x, c } => {
                    give(*x, dy.iter().map(|&g| g * c).collect());
                }
                Op::ScalarAdd { x } => {
                    give(*x, dy.to_vec());
                }
                Op::Gap { x, plane } => {
                    let inv = 1.0 / *plane as f32;
                    let mut dx = vec![0.0f32; values[x.0].numel()];
                    for (i, &g) in dy.iter().enumerate() {
                        for v in &mut dx[i * plane..(i + 1) * plane] {
                            *v = g * inv;
                        }
                    }
                    give(*x, dx);
                }
                Op::Reshape { x } => {
                    give(*x, dy.to_vec());
                }
                Op::SumAll { x } => {
                    give(*x, vec![dy[0]; values[x.0].numel()]);
                }
                Op::MeanAll { x } => {
                    let n = values[x.0].numel();
                    give(*x, vec![dy[0] / n as f32; n]);
                }
                Op::Spike { u, threshold, width } => {
                    let half = width / 2.0;
                    let scale = 1.0 / width;
                    let du = values[u.0]
                        .data()
                        .iter()
                        .zip(dy)
                        .map(|(&v, &g)| {
                            if (v - threshold).abs() <= half {
                                g * scale
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    give(*u, du);
                }
                Op::SoftmaxXent { logits, labels } => {
                    let data = values[logits.0].data();
                    let k = values[logits.0].shape()[1];
                    let inv_b = 1.0 / labels.len() as f32;
                    let mut dz = vec![0.0f32; data.len()];
                    for (r, &label) in labels.iter().enumerate() {
                        let row = &data[r * k..(r + 1) * k];
                        let m = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                        let denom: f32 = row.iter().map(|&z| libm::expf(z - m)).sum();
                        for j in 0..k {
                            let soft = libm::expf(row[j] - m) / denom;
                            let ind = if j == label { 1.0 } else { 0.0 };
                            dz[r * k + j] = dy[0] * inv_b * (soft - ind);
                        }
                    }
                    give(*logits, dz);
                }
                Op::FocalLoss { logits, target, norm } => {
                    let z = values[logits.0].data();
                    let y = values[target.0].data();
                    let scale = dy[0] / norm;
                    let dz = z
                        .iter()
                        .zip(y)
                        .map(|(&zi, &yi)| {
                            let p = ops::sigmoid_scalar(zi);
                            let q = 1.0 - p;
                            let ln_p = -ops::softplus(-zi);
                            let ln_1mp = -ops::softplus(zi);
                            let d = if yi == 1.0 {
                                -2.0 * p * q * q * ln_p + q * q * q
                            } else {
                                let w = (1.0 - yi) * (1.0 - yi);
                                w * w * (2.0 * p * p * q * ln_1mp - p * p * p)
                            };
                            -scale * d
                        })
                        .collect();
                    give(*logits, dz);
                }
                Op::L1Masked { pred, target, mask, norm } => {
                    let p = values[pred.0].data();
                    let t = values[target.0].data();
                    let m = values[mask.0].data();
                    let scale = dy[0] / norm;
                    let dp = p
                        .iter()
                        .zip(t)
                        .zip(m)
                        .map(|((pv, tv), mv)| {
                            let diff = pv - tv;
                            let sign = if diff > 0.0 {
                                1.0
                            } else if diff < 0.0 {
                                -1.0
                            } else {
                                0.0
                            };
                            scale * mv * sign
                        })
                        .collect();
                    give(*pred, dp);
                }
            }
        }
        Ok(())
    }
}
