use std::borrow::Cow;

use super::tensor::{axis_split, Tensor};
use crate::{Error, Result, Scalar};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, T),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Sum(NodeId, usize),
    Mean(NodeId, usize),
    Max(NodeId, Vec<usize>),
    SumAll(NodeId),
    Softmax(NodeId, usize),
    MaskedFill(NodeId, Vec<bool>),
    StraightThrough(NodeId),
    Reshape(NodeId),
    Transpose(NodeId),
    Concat(Vec<NodeId>),
    Embedding {
        weight: NodeId,
        ids: Vec<usize>,
        mask: Vec<bool>,
    },
    Dropout(NodeId, Vec<T>),
}

#[derive(Debug)]
struct Node<'a, T: Scalar> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recording tape for one forward pass.
///
/// Nodes are appended as operations execute, so node order is a valid
/// topological order. `backward` consumes the graph: one backward pass per
/// recorded forward.
#[derive(Debug, Default)]
pub struct Graph<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `id`; zeros when the loss does not reach it.
    pub fn get(&self, id: NodeId) -> Tensor<T> {
        self.grads[id.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[id.0]))
    }

    pub fn take(&mut self, id: NodeId) -> Tensor<T> {
        self.grads[id.0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[id.0]))
    }
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<T>, op: Op<T>, rg: bool) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad: rg,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Trainable leaf borrowed from a parameter store.
    pub fn param(&mut self, t: &'a Tensor<T>) -> NodeId {
        self.nodes.push(Node {
            value: Cow::Borrowed(t),
            op: Op::Leaf,
            requires_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> NodeId {
        self.nodes.push(Node {
            value: Cow::Owned(t),
            op: Op::Leaf,
            requires_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", v, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("add", v, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("sub", v, Op::Sub(a, b), rg)
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).zip_map(self.value(b), "hadamard", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("hadamard", v, Op::Hadamard(a, b), rg)
    }

    /// `[m, n] + [n]`, the bias broadcast over rows.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (x, b) = (self.value(a), self.value(bias));
        if x.rank() != 2 || b.len() != x.cols() {
            return Err(Error::Shape {
                op: "add_row",
                left: x.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let n = x.cols();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = *v + b.data()[i % n];
        }
        let rg = self.rg(a) || self.rg(bias);
        self.push("add_row", out, Op::AddRow(a, bias), rg)
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push("scale", v, Op::Scale(a, c), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| T::one() / (T::one() + (-x).exp()));
        let rg = self.rg(a);
        self.push("sigmoid", v, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x.tanh());
        let rg = self.rg(a);
        self.push("tanh", v, Op::Tanh(a), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(|x| x.max(T::zero()));
        let rg = self.rg(a);
        self.push("relu", v, Op::Relu(a), rg)
    }

    pub fn sum(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let v = self.value(a).sum_axis(axis)?;
        let rg = self.rg(a);
        self.push("sum", v, Op::Sum(a, axis), rg)
    }

    pub fn mean(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let v = self.value(a).mean_axis(axis)?;
        let rg = self.rg(a);
        self.push("mean", v, Op::Mean(a, axis), rg)
    }

    /// Max along `axis`. The gradient goes to one position per slice, the
    /// lowest index among tied maxima.
    pub fn max(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let (v, arg) = self.value(a).max_axis(axis)?;
        let rg = self.rg(a);
        self.push("max", v, Op::Max(a, arg), rg)
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push("sum_all", v, Op::SumAll(a), rg)
    }

    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let v = self.value(a).softmax(axis)?;
        let rg = self.rg(a);
        self.push("softmax", v, Op::Softmax(a, axis), rg)
    }

    /// Replaces positions where `mask` is true with `fill`; no gradient flows
    /// to replaced positions.
    pub fn masked_fill(&mut self, a: NodeId, mask: Vec<bool>, fill: T) -> Result<NodeId> {
        let x = self.value(a);
        if mask.len() != x.len() {
            return Err(Error::Shape {
                op: "masked_fill",
                left: x.shape().to_vec(),
                right: vec![mask.len()],
            });
        }
        let mut out = x.clone();
        for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
            if m {
                *v = fill;
            }
        }
        let rg = self.rg(a);
        self.push("masked_fill", out, Op::MaskedFill(a, mask), rg)
    }

    /// Emits `forward` in the forward pass while passing the incoming gradient
    /// unchanged to `soft`.
    pub fn straight_through(&mut self, soft: NodeId, forward: Tensor<T>) -> Result<NodeId> {
        self.value(soft).same_shape(&forward, "straight_through")?;
        let rg = self.rg(soft);
        self.push("straight_through", forward, Op::StraightThrough(soft), rg)
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).reshape(shape)?;
        let rg = self.rg(a);
        self.push("reshape", v, Op::Reshape(a), rg)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).transpose()?;
        let rg = self.rg(a);
        self.push("transpose", v, Op::Transpose(a), rg)
    }

    /// Concatenates the flattened inputs into one vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Empty("concat input"));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push("concat", Tensor::from_vec(data), Op::Concat(parts.to_vec()), rg)
    }

    /// Row lookup `weight[ids[i]]`; rows with `mask[i] == true` are zero and
    /// receive no gradient.
    pub fn embedding(&mut self, weight: NodeId, ids: &[usize], mask: &[bool]) -> Result<NodeId> {
        let w = self.value(weight);
        if w.rank() != 2 || ids.len() != mask.len() || ids.is_empty() {
            return Err(Error::Shape {
                op: "embedding",
                left: w.shape().to_vec(),
                right: vec![ids.len(), mask.len()],
            });
        }
        let (rows, d) = (w.rows(), w.cols());
        let mut out = vec![T::zero(); ids.len() * d];
        for (i, (&id, &m)) in ids.iter().zip(mask).enumerate() {
            if m {
                continue;
            }
            if id >= rows {
                return Err(Error::Index {
                    op: "embedding",
                    index: id,
                    size: rows,
                });
            }
            out[i * d..(i + 1) * d].copy_from_slice(w.row(id));
        }
        let v = Tensor::new(vec![ids.len(), d], out)?;
        let rg = self.rg(weight);
        self.push(
            "embedding",
            v,
            Op::Embedding {
                weight,
                ids: ids.to_vec(),
                mask: mask.to_vec(),
            },
            rg,
        )
    }

    /// Multiplies by a fixed per-element factor (an inverted-dropout keep mask).
    pub fn dropout_with_mask(&mut self, a: NodeId, factors: Vec<T>) -> Result<NodeId> {
        let x = self.value(a);
        if factors.len() != x.len() {
            return Err(Error::Shape {
                op: "dropout",
                left: x.shape().to_vec(),
                right: vec![factors.len()],
            });
        }
        let mut out = x.clone();
        for (v, &f) in out.data_mut().iter_mut().zip(&factors) {
            *v = *v * f;
        }
        let rg = self.rg(a);
        self.push("dropout", out, Op::Dropout(a, factors), rg)
    }

    // Composite helpers.

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.hadamard(a, a)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let h = self.hadamard(a, b)?;
        self.sum_all(h)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(self, loss: NodeId) -> Result<Gradients<T>> {
        let loss_shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(loss_shape));
        }
        let n = self.nodes.len();
        let shapes: Vec<Vec<usize>> = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(&loss_shape));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let send = |grads: &mut Vec<Option<Tensor<T>>>, to: NodeId, t: Tensor<T>| {
                if !self.nodes[to.0].requires_grad {
                    return;
                }
                match &mut grads[to.0] {
                    Some(acc) => acc.accumulate(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            let y = &*node.value;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.rg(*a) {
                        send(&mut grads, *a, g.matmul(&bv.transpose()?)?);
                    }
                    if self.rg(*b) {
                        send(&mut grads, *b, av.transpose()?.matmul(&g)?);
                    }
                }
                Op::Add(a, b) => {
                    send(&mut grads, *a, g.clone());
                    send(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    send(&mut grads, *b, g.map(|v| -v));
                    send(&mut grads, *a, g);
                }
                Op::Hadamard(a, b) => {
                    let ga = g.zip_map(self.value(*b), "hadamard", |x, y| x * y)?;
                    let gb = g.zip_map(self.value(*a), "hadamard", |x, y| x * y)?;
                    send(&mut grads, *a, ga);
                    send(&mut grads, *b, gb);
                }
                Op::AddRow(a, bias) => {
                    if self.rg(*bias) {
                        let gb = g.sum_axis(0)?.reshape(self.value(*bias).shape())?;
                        send(&mut grads, *bias, gb);
                    }
                    send(&mut grads, *a, g);
                }
                Op::Scale(a, c) => send(&mut grads, *a, g.map(|v| v * *c)),
                Op::Sigmoid(a) => {
                    let gx = g.zip_map(y, "sigmoid", |gv, s| gv * s * (T::one() - s))?;
                    send(&mut grads, *a, gx);
                }
                Op::Tanh(a) => {
                    let gx = g.zip_map(y, "tanh", |gv, t| gv * (T::one() - t * t))?;
                    send(&mut grads, *a, gx);
                }
                Op::Relu(a) => {
                    let gx = g.zip_map(self.value(*a), "relu", |gv, x| {
                        if x > T::zero() {
                            gv
                        } else {
                            T::zero()
                        }
                    })?;
                    send(&mut grads, *a, gx);
                }
                Op::Sum(a, axis) | Op::Mean(a, axis) => {
                    let shape = self.value(*a).shape();
                    let (outer, len, inner) = axis_split(shape, *axis);
                    let f = if matches!(node.op, Op::Mean(..)) {
                        T::one() / T::from_usize_lossy(len)
                    } else {
                        T::one()
                    };
                    let mut out = vec![T::zero(); outer * len * inner];
                    for o in 0..outer {
                        for k in 0..len {
                            for i in 0..inner {
                                out[(o * len + k) * inner + i] = g.data()[o * inner + i] * f;
                            }
                        }
                    }
                    send(&mut grads, *a, Tensor::new(shape.to_vec(), out)?);
                }
                Op::Max(a, arg) => {
                    let mut out = Tensor::zeros(self.value(*a).shape());
                    for (j, &src) in arg.iter().enumerate() {
                        out.data_mut()[src] = out.data()[src] + g.data()[j];
                    }
                    send(&mut grads, *a, out);
                }
                Op::SumAll(a) => {
                    send(&mut grads, *a, Tensor::full(self.value(*a).shape(), g.item()));
                }
                Op::Softmax(a, axis) => {
                    let (outer, len, inner) = axis_split(y.shape(), *axis);
                    let mut out = vec![T::zero(); y.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |k: usize| (o * len + k) * inner + i;
                            let mut dot = T::zero();
                            for k in 0..len {
                                dot = dot + g.data()[at(k)] * y.data()[at(k)];
                            }
                            for k in 0..len {
                                out[at(k)] = y.data()[at(k)] * (g.data()[at(k)] - dot);
                            }
                        }
                    }
                    send(&mut grads, *a, Tensor::new(y.shape().to_vec(), out)?);
                }
                Op::MaskedFill(a, mask) => {
                    let mut gx = g;
                    for (v, &m) in gx.data_mut().iter_mut().zip(mask) {
                        if m {
                            *v = T::zero();
                        }
                    }
                    send(&mut grads, *a, gx);
                }
                Op::StraightThrough(a) => send(&mut grads, *a, g),
                Op::Reshape(a) => {
                    let gx = g.reshape(self.value(*a).shape())?;
                    send(&mut grads, *a, gx);
                }
                Op::Transpose(a) => send(&mut grads, *a, g.transpose()?),
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.value(p).shape().to_vec();
                        let len = self.value(p).len();
                        let piece = g.data()[offset..offset + len].to_vec();
                        offset += len;
                        send(&mut grads, p, Tensor::new(shape, piece)?);
                    }
                }
                Op::Embedding { weight, ids, mask } => {
                    let w = self.value(*weight);
                    let d = w.cols();
                    let mut gw = Tensor::zeros(w.shape());
                    for (i, (&id, &m)) in ids.iter().zip(mask).enumerate() {
                        if m {
                            continue;
                        }
                        let dst = &mut gw.data_mut()[id * d..(id + 1) * d];
                        for (o, &v) in dst.iter_mut().zip(&g.data()[i * d..(i + 1) * d]) {
                            *o = *o + v;
                        }
                    }
                    send(&mut grads, *weight, gw);
                }
                Op::Dropout(a, factors) => {
                    let mut gx = g;
                    for (v, &f) in gx.data_mut().iter_mut().zip(factors) {
                        *v = *v * f;
                    }
                    send(&mut grads, *a, gx);
                }
            }
        }
        Ok(Gradients { grads, shapes })
    }
}
