//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is an append-only list of nodes. Every node stores its forward
//! value and the operation that produced it; node indices are topologically
//! ordered by construction, so the backward pass is a single reverse sweep.

use super::kernels;
use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{contract, dim_err, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An operation with a hand-written vector-Jacobian product.
///
/// Losses with fused forward/backward passes (the alignment losses, the
/// consistency divergence) plug into the graph through this trait.
pub trait CustomOp {
    fn name(&self) -> &'static str;

    /// Returns one gradient per input, in input order; `None` means the op
    /// contributes nothing to that input.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad_out: &Tensor) -> Vec<Option<Tensor>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernels: usize,
    pub ksize: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

enum Op {
    Leaf,
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    Relu(Var),
    Reshape(Var),
    Add(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Softmax(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor,
    },
    ConcatRows(Vec<Var>),
    GradReverse(Var),
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    bindings: Vec<(ParamId, Var)>,
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that does not require differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that receives a gradient on [`Graph::backward`].
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf bound to a stored parameter. Binding the same parameter twice
    /// returns the same node, so reuse across several forward passes shares
    /// one gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&(_, v)) = self.bindings.iter().find(|(p, _)| *p == id) {
            return v;
        }
        let v = self.variable(store.value(id).clone());
        self.bindings.push((id, v));
        v
    }

    pub fn bindings(&self) -> &[(ParamId, Var)] {
        &self.bindings
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient; `None` until a backward pass reaches `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (x, w, b) = (self.value(input), self.value(weight), self.value(bias));
        if x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1 {
            return Err(dim_err(
                "linear",
                format!(
                    "expected input [B, D_in], weights [D_in, D_out], bias [D_out]; got {:?}, {:?}, {:?}",
                    x.shape(),
                    w.shape(),
                    b.shape()
                ),
            ));
        }
        let (batch, d_in) = (x.shape()[0], x.shape()[1]);
        let d_out = w.shape()[1];
        if w.shape()[0] != d_in || b.shape()[0] != d_out {
            return Err(dim_err(
                "linear",
                format!(
                    "input width {} vs weight rows {}, weight cols {} vs bias {}",
                    d_in,
                    w.shape()[0],
                    d_out,
                    b.shape()[0]
                ),
            ));
        }
        let mut out = kernels::matmul(x.data(), w.data(), batch, d_in, d_out);
        for row in out.chunks_mut(d_out) {
            for (o, bias) in row.iter_mut().zip(b.data()) {
                *o += bias;
            }
        }
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        let value = Tensor::new(vec![batch, d_out], out)?;
        Ok(self.push(value, Op::Linear { input, weight, bias }, rg))
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let (x, k, b) = (self.value(input), self.value(kernel), self.value(bias));
        if x.ndim() != 4 || k.ndim() != 4 || b.ndim() != 1 {
            return Err(dim_err(
                "conv2d",
                format!(
                    "expected input [B, C, H, W], kernels [K, C, k, k], bias [K]; got {:?}, {:?}, {:?}",
                    x.shape(),
                    k.shape(),
                    b.shape()
                ),
            ));
        }
        let [batch, channels, height, width] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let [kernels, kc, kh, kw] = [k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]];
        if kc != channels {
            return Err(dim_err(
                "conv2d",
                format!("input has {channels} channels, kernels expect {kc}"),
            ));
        }
        if kh != kw {
            return Err(dim_err("conv2d", format!("kernel must be square, got {kh}x{kw}")));
        }
        if b.shape()[0] != kernels {
            return Err(dim_err(
                "conv2d",
                format!("bias has {} entries for {} kernels", b.shape()[0], kernels),
            ));
        }
        if stride == 0 {
            return Err(contract("conv2d stride must be at least 1"));
        }
        if kh > height + 2 * padding || kw > width + 2 * padding {
            return Err(dim_err(
                "conv2d",
                format!("kernel {kh} larger than padded input {height}x{width} (+{padding})"),
            ));
        }
        let geom = ConvGeom {
            batch,
            channels,
            height,
            width,
            kernels,
            ksize: kh,
            stride,
            padding,
            out_h: (height + 2 * padding - kh) / stride + 1,
            out_w: (width + 2 * padding - kw) / stride + 1,
        };
        let (out, cols) = kernels::conv2d_forward(x.data(), k.data(), b.data(), &geom);
        let rg = self.rg(input) || self.rg(kernel) || self.rg(bias);
        let value = Tensor::new(vec![batch, kernels, geom.out_h, geom.out_w], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cols,
            },
            rg,
        ))
    }

    /// Elementwise `max(0, x)`; the derivative at exactly 0 is taken as 0.
    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    /// Smallest `|x|` over the inputs of every ReLU in the graph, or `None`
    /// without ReLUs. Finite differences are unreliable when this is small.
    pub fn relu_margin(&self) -> Option<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(x) => Some(self.value(x).data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))),
                _ => None,
            })
            .reduce(f64::min)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Collapses everything after the leading axis.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let shape = vec![t.rows(), t.row_len()];
        self.reshape(x, shape)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(dim_err("add", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let mut value = ta.clone();
        value.add_assign(tb);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, factor), rg)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, Op::Sum(x), rg)
    }

    /// `weights[0] * terms[0] + weights[1] * terms[1] + ...` over scalars.
    pub fn weighted_sum(&mut self, terms: &[(f64, Var)]) -> Result<Var> {
        let (&(w0, v0), rest) = terms
            .split_first()
            .ok_or_else(|| contract("weighted_sum needs at least one term"))?;
        let mut acc = self.scale(v0, w0);
        for &(w, v) in rest {
            let s = self.scale(v, w);
            acc = self.add(acc, s)?;
        }
        Ok(acc)
    }

    /// Row-wise softmax of a `[B, C]` tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.ndim() != 2 {
            return Err(dim_err("softmax", format!("expected [B, C], got {:?}", t.shape())));
        }
        let value = Tensor::new(t.shape().to_vec(), kernels::softmax_rows(t.data(), t.shape()[1]))?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Softmax(x), rg))
    }

    /// Batch-mean cross-entropy of `[B, C]` logits against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if t.ndim() != 2 {
            return Err(dim_err(
                "softmax_cross_entropy",
                format!("expected [B, C] logits, got {:?}", t.shape()),
            ));
        }
        let (batch, classes) = (t.shape()[0], t.shape()[1]);
        if labels.len() != batch {
            return Err(dim_err(
                "softmax_cross_entropy",
                format!("{} labels for batch of {}", labels.len(), batch),
            ));
        }
        if batch == 0 {
            return Err(contract("cross-entropy over an empty batch"));
        }
        if let Some((position, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::LabelOutOfRange {
                label,
                position,
                classes,
            });
        }
        let mut total = 0.0;
        for (row, &label) in t.data().chunks(classes).zip(labels) {
            total += kernels::logsumexp(row) - row[label];
        }
        let probs = Tensor::new(t.shape().to_vec(), kernels::softmax_rows(t.data(), classes))?;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(total / batch as f64),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Stacks tensors along the leading axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| contract("concat_rows needs at least one tensor"))?;
        let tail: Vec<usize> = self.value(*first).shape()[1..].to_vec();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.shape()[1..] != tail[..] {
                return Err(dim_err(
                    "concat_rows",
                    format!("{:?} vs trailing {:?}", t.shape(), tail),
                ));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::new(shape, data)?, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Identity on the forward pass, negated gradient on the backward pass.
    pub fn grad_reverse(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        let rg = self.rg(x);
        self.push(value, Op::GradReverse(x), rg)
    }

    /// Appends a node whose value the caller computed and whose gradient is
    /// provided by `op`.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, op: Box<dyn CustomOp>) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            rg,
        )
    }

    /// Reverse sweep from a scalar root. Gradients add onto whatever earlier
    /// passes left behind; call [`Graph::zero_grad`] to reset.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).len() != 1 {
            return Err(contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Tensor::full(self.value(root).shape(), 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            match &mut self.grads[i] {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let mut send = |v: Var, grad: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(acc) => acc.add_assign(&grad),
                slot => *slot = Some(grad),
            }
        };
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Linear { input, weight, bias } => {
                let (x, w) = (self.value(*input), self.value(*weight));
                let (batch, d_in, d_out) = (x.shape()[0], x.shape()[1], w.shape()[1]);
                if self.rg(*input) {
                    let dx = kernels::matmul_a_bt(g.data(), w.data(), batch, d_out, d_in);
                    send(*input, Tensor::new(x.shape().to_vec(), dx).expect("shape"));
                }
                if self.rg(*weight) {
                    let dw = kernels::matmul_at_b(x.data(), g.data(), batch, d_in, d_out);
                    send(*weight, Tensor::new(w.shape().to_vec(), dw).expect("shape"));
                }
                if self.rg(*bias) {
                    let mut db = vec![0.0; d_out];
                    for row in g.data().chunks(d_out) {
                        for (a, b) in db.iter_mut().zip(row) {
                            *a += b;
                        }
                    }
                    send(*bias, Tensor::new(vec![d_out], db).expect("shape"));
                }
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cols,
            } => {
                let k = self.value(*kernel);
                let (dx, dk, db) = kernels::conv2d_backward(g.data(), k.data(), cols, geom);
                if self.rg(*input) {
                    send(
                        *input,
                        Tensor::new(self.value(*input).shape().to_vec(), dx).expect("shape"),
                    );
                }
                if self.rg(*kernel) {
                    send(*kernel, Tensor::new(k.shape().to_vec(), dk).expect("shape"));
                }
                if self.rg(*bias) {
                    send(*bias, Tensor::new(vec![geom.kernels], db).expect("shape"));
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x);
                let mut dx = g.clone();
                for (d, &v) in dx.data_mut().iter_mut().zip(xv.data()) {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                }
                send(*x, dx);
            }
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                send(*x, g.clone().reshape(shape).expect("shape"));
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Scale(x, factor) => send(*x, g.map(|v| v * factor)),
            Op::Sum(x) => {
                let shape = self.value(*x).shape().to_vec();
                send(*x, Tensor::full(&shape, g.item()));
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let c = y.shape()[1];
                let mut dx = vec![0.0; y.len()];
                for ((drow, yrow), grow) in dx.chunks_mut(c).zip(y.data().chunks(c)).zip(g.data().chunks(c)) {
                    let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    for ((d, &yv), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                        *d = yv * (gv - dot);
                    }
                }
                send(*x, Tensor::new(y.shape().to_vec(), dx).expect("shape"));
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let c = probs.shape()[1];
                let scale = g.item() / labels.len() as f64;
                let mut dx = probs.clone();
                for (row, &label) in dx.data_mut().chunks_mut(c).zip(labels) {
                    row[label] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                send(*logits, dx);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let t = self.value(p);
                    let n = t.len();
                    let part = Tensor::new(t.shape().to_vec(), g.data()[offset..offset + n].to_vec()).expect("shape");
                    offset += n;
                    send(p, part);
                }
            }
            Op::GradReverse(x) => send(*x, g.map(|v| -v)),
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let grads = op.backward(&values, &node.value, g);
                debug_assert_eq!(grads.len(), inputs.len(), "{} returned wrong arity", op.name());
                for (&v, grad) in inputs.iter().zip(grads) {
                    if let Some(grad) = grad {
                        send(v, grad);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn linear_identity_weights() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
        let w = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let b = g.constant(Tensor::zeros(&[2]));
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn linear_hand_sum() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap());
        let w = g.constant(Tensor::from_rows(&[vec![2.0], vec![3.0]]).unwrap());
        let b = g.constant(Tensor::new(vec![1], vec![1.0]).unwrap());
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1]);
        assert_eq!(g.value(y).item(), 6.0);
    }

    #[test]
    fn linear_rejects_mismatch() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 3]));
        let w = g.constant(Tensor::zeros(&[4, 2]));
        let b = g.constant(Tensor::zeros(&[2]));
        let err = g.linear(x, w, b).unwrap_err();
        assert!(matches!(err, Error::Dimension { op: "linear", .. }), "{err}");
    }

    #[test]
    fn conv_all_ones() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let k = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let b = g.constant(Tensor::new(vec![1], vec![0.5]).unwrap());
        let y = g.conv2d(x, k, b, 1, 0).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 1, 1]);
        assert_eq!(g.value(y).item(), 9.5);
    }

    #[test]
    fn conv_impulse_response_is_flipped_kernel() {
        // A centred impulse under zero padding reads the kernel back in
        // reverse index order, since cross-correlation does not flip.
        let mut img = Tensor::zeros(&[1, 1, 3, 3]);
        img.data_mut()[4] = 1.0;
        let kernel: Vec<f64> = (1..=9).map(f64::from).collect();
        let mut g = Graph::new();
        let x = g.constant(img);
        let k = g.constant(Tensor::new(vec![1, 1, 3, 3], kernel.clone()).unwrap());
        let b = g.constant(Tensor::zeros(&[1]));
        let y = g.conv2d(x, k, b, 1, 1).unwrap();
        let flipped: Vec<f64> = kernel.iter().rev().copied().collect();
        assert_eq!(g.value(y).data(), &flipped[..]);
    }

    #[test]
    fn conv_output_extent_and_channel_check() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[2, 3, 8, 8]));
        let k = g.constant(Tensor::zeros(&[4, 3, 3, 3]));
        let b = g.constant(Tensor::zeros(&[4]));
        let y = g.conv2d(x, k, b, 2, 1).unwrap();
        assert_eq!(g.value(y).shape(), &[2, 4, 4, 4]);
        let bad = g.constant(Tensor::zeros(&[4, 2, 3, 3]));
        assert!(matches!(
            g.conv2d(x, bad, b, 1, 0),
            Err(Error::Dimension { op: "conv2d", .. })
        ));
        assert!(matches!(g.conv2d(x, k, b, 0, 0), Err(Error::Contract(_))));
    }

    #[test]
    fn relu_values_and_zero_subgradient() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_all_negative_blocks_gradient() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::full(&[2, 2], -0.5));
        let y = g.relu(x);
        let s = g.sum(y);
        assert_eq!(g.value(s).item(), 0.0);
        g.backward(s).unwrap();
        assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cross_entropy_cases() {
        let mut g = Graph::new();
        let logits = g.constant(Tensor::from_rows(&[vec![10.0, -10.0]]).unwrap());
        let ce = g.softmax_cross_entropy(logits, &[0]).unwrap();
        assert!(approx(g.value(ce).item(), 0.0, 1e-4));

        for classes in [2usize, 5, 10, 100] {
            let logits = g.constant(Tensor::full(&[3, classes], 0.7));
            let ce = g.softmax_cross_entropy(logits, &[0, 1, classes - 1]).unwrap();
            assert!(approx(g.value(ce).item(), (classes as f64).ln(), 1e-9));
        }

        let logits = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.softmax_cross_entropy(logits, &[0, 3]).unwrap_err();
        assert!(matches!(
            err,
            Error::LabelOutOfRange {
                label: 3,
                position: 1,
                classes: 3
            }
        ));
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut g = Graph::new();
        let p = g.variable(Tensor::new(vec![2, 2], vec![0.1, -2.0, 3.0, 4.0]).unwrap());
        let s = g.sum(p);
        g.backward(s).unwrap();
        assert_eq!(g.grad(p).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn backward_accumulates_and_skips_disconnected() {
        let mut g = Graph::new();
        let p = g.variable(Tensor::new(vec![3], vec![0.3, -1.2, 2.5]).unwrap());
        let other = g.variable(Tensor::new(vec![1], vec![4.0]).unwrap());
        let sq = g.relu(p);
        let s = g.sum(sq);
        let s = g.scale(s, 1.7);
        g.backward(s).unwrap();
        let once = g.grad(p).unwrap().clone();
        g.backward(s).unwrap();
        let twice = g.grad(p).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
        assert!(g.grad(other).is_none());
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut g = Graph::new();
        let p = g.variable(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(p), Err(Error::Contract(_))));
    }

    #[test]
    fn grad_reverse_negates() {
        let mut g = Graph::new();
        let p = g.variable(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let r = g.grad_reverse(p);
        let s = g.sum(r);
        assert_eq!(g.value(s).item(), 3.0);
        g.backward(s).unwrap();
        assert_eq!(g.grad(p).unwrap().data(), &[-1.0, -1.0]);
    }
}
