use std::cell::{Ref, RefCell};
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvDims};
use super::{numel, Real, Result, Tensor, TensorError};
use crate::rng::Rng;

pub type NodeId = usize;

/// Whether stochastic layers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add {
        a: NodeId,
        b: NodeId,
    },
    /// `b` is a per-channel vector broadcast over `[outer, channels, inner]`.
    AddBias {
        a: NodeId,
        b: NodeId,
        outer: usize,
        channels: usize,
        inner: usize,
    },
    MatMul {
        a: NodeId,
        b: NodeId,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv1d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        dims: ConvDims,
    },
    MaxPool1d {
        input: NodeId,
        argmax: Vec<usize>,
    },
    Silu {
        x: NodeId,
    },
    Dropout {
        x: NodeId,
        /// Already scaled by `1 / (1 - rate)`.
        mask: Vec<T>,
    },
    Reshape {
        x: NodeId,
    },
    Sum {
        x: NodeId,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        classes: usize,
    },
}

impl<T> Op<T> {
    fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::Add { a, b } | Op::AddBias { a, b, .. } | Op::MatMul { a, b, .. } => vec![*a, *b],
            Op::Conv1d {
                input, weight, bias, ..
            } => vec![*input, *weight, *bias],
            Op::MaxPool1d { input, .. } => vec![*input],
            Op::Silu { x } | Op::Dropout { x, .. } | Op::Reshape { x } | Op::Sum { x } => vec![*x],
            Op::CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Append-only record of the operations of one forward pass.
///
/// Nodes are pushed in evaluation order, so the node list is always a valid
/// topological order and `backward` is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug)]
pub struct Var<'t, T> {
    tape: &'t Tape<T>,
    id: NodeId,
}

impl<T> Clone for Var<'_, T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for Var<'_, T> {}

/// Gradients of a scalar with respect to every leaf that requires them.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    by_node: BTreeMap<NodeId, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, var: Var<'_, T>) -> Option<&Tensor<T>> {
        self.by_node.get(&var.id)
    }

    pub fn len(&self) -> usize {
        self.by_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_node.is_empty()
    }

    pub fn take(&mut self, var: Var<'_, T>) -> Option<Tensor<T>> {
        self.by_node.remove(&var.id)
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    /// Drops every recorded node. Requires that no [`Var`] is still alive.
    pub fn reset(&mut self) {
        self.nodes.get_mut().clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf whose gradient is reported by `backward`.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Records a derived node; it requires grad iff any parent does.
    fn record(&self, name: &'static str, value: Tensor<T>, op: Op<T>) -> Result<Var<'_, T>> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite(name));
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            op.parents().iter().any(|&p| nodes[p].requires_grad)
        };
        Ok(self.push(value, op, requires_grad))
    }

    fn value_ref(&self, id: NodeId) -> Ref<'_, Tensor<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn check_owner(&self, var: Var<'_, T>) -> Result<()> {
        if std::ptr::eq(var.tape, self) && var.id < self.len() {
            Ok(())
        } else {
            Err(TensorError::NotOnTape)
        }
    }

    /// Argmax indices of every max-pool recorded so far, in tape order.
    pub fn pool_routes(&self) -> Vec<usize> {
        self.nodes
            .borrow()
            .iter()
            .filter_map(|n| match &n.op {
                Op::MaxPool1d { argmax, .. } => Some(argmax.as_slice()),
                _ => None,
            })
            .flatten()
            .copied()
            .collect()
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var<'_, T>) -> Result<Gradients<T>> {
        self.check_owner(loss)?;
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if !root.value.is_scalar() {
            return Err(TensorError::NotScalar(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(loss.id + 1, || None);
        if root.requires_grad {
            grads[loss.id] = Some(vec![T::one()]);
        }

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                }
                Op::Add { a, b } => {
                    accumulate(&nodes, &mut grads, *a, |ga| add_into(ga, &g));
                    accumulate(&nodes, &mut grads, *b, |gb| add_into(gb, &g));
                }
                Op::AddBias {
                    a,
                    b,
                    outer,
                    channels,
                    inner,
                } => {
                    accumulate(&nodes, &mut grads, *a, |ga| add_into(ga, &g));
                    accumulate(&nodes, &mut grads, *b, |gb| {
                        for o in 0..*outer {
                            for c in 0..*channels {
                                let s: T = g[(o * channels + c) * inner..][..*inner].iter().copied().sum();
                                gb[c] = gb[c] + s;
                            }
                        }
                    });
                }
                Op::MatMul { a, b, m, k, n } => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    accumulate(&nodes, &mut grads, *a, |ga| {
                        kernels::matmul_grad_a(&g, bv.data(), *m, *k, *n, ga)
                    });
                    accumulate(&nodes, &mut grads, *b, |gb| {
                        kernels::matmul_grad_b(av.data(), &g, *m, *k, *n, gb)
                    });
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                    dims,
                } => {
                    let x = nodes[*input].value.data();
                    let w = nodes[*weight].value.data();
                    let mut gi = take_buffer(&nodes, &mut grads, *input);
                    let mut gw = take_buffer(&nodes, &mut grads, *weight);
                    let mut gb = take_buffer(&nodes, &mut grads, *bias);
                    kernels::conv1d_backward(*dims, x, w, &g, gi.as_deref_mut(), gw.as_deref_mut(), gb.as_deref_mut());
                    restore(&mut grads, *input, gi);
                    restore(&mut grads, *weight, gw);
                    restore(&mut grads, *bias, gb);
                }
                Op::MaxPool1d { input, argmax } => {
                    accumulate(&nodes, &mut grads, *input, |gi| {
                        for (&src, &gv) in argmax.iter().zip(&g) {
                            gi[src] = gi[src] + gv;
                        }
                    });
                }
                Op::Silu { x } => {
                    let xv = nodes[*x].value.data();
                    accumulate(&nodes, &mut grads, *x, |gx| {
                        for ((acc, &gv), &xi) in gx.iter_mut().zip(&g).zip(xv) {
                            let s = kernels::sigmoid(xi);
                            *acc = *acc + gv * s * (T::one() + xi * (T::one() - s));
                        }
                    });
                }
                Op::Dropout { x, mask } => {
                    accumulate(&nodes, &mut grads, *x, |gx| {
                        for ((acc, &gv), &m) in gx.iter_mut().zip(&g).zip(mask) {
                            *acc = *acc + gv * m;
                        }
                    });
                }
                Op::Reshape { x } => {
                    accumulate(&nodes, &mut grads, *x, |gx| add_into(gx, &g));
                }
                Op::Sum { x } => {
                    accumulate(&nodes, &mut grads, *x, |gx| {
                        for acc in gx.iter_mut() {
                            *acc = *acc + g[0];
                        }
                    });
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    classes,
                } => {
                    let lv = nodes[*logits].value.data();
                    let scale = g[0] / T::lit(targets.len() as f64);
                    accumulate(&nodes, &mut grads, *logits, |gl| {
                        let mut p = vec![T::zero(); *classes];
                        for (r, &t) in targets.iter().enumerate() {
                            let row = &lv[r * classes..][..*classes];
                            kernels::softmax_row(row, &mut p);
                            p[t] = p[t] - T::one();
                            for (acc, &pv) in gl[r * classes..][..*classes].iter_mut().zip(&p) {
                                *acc = *acc + pv * scale;
                            }
                        }
                    });
                }
            }
        }

        let mut by_node = BTreeMap::new();
        for (id, node) in nodes.iter().enumerate().take(loss.id + 1) {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                let g = grads[id].take().unwrap_or_else(|| vec![T::zero(); node.value.len()]);
                by_node.insert(id, Tensor::new(node.value.shape().to_vec(), g)?);
            }
        }
        // Parameters recorded after the loss cannot influence it.
        for (id, node) in nodes.iter().enumerate().skip(loss.id + 1) {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                by_node.insert(id, Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        Ok(Gradients { by_node })
    }
}

fn add_into<T: Real>(acc: &mut [T], g: &[T]) {
    for (a, &b) in acc.iter_mut().zip(g) {
        *a = *a + b;
    }
}

fn accumulate<T: Real>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], id: NodeId, f: impl FnOnce(&mut [T])) {
    if !nodes[id].requires_grad {
        return;
    }
    let buf = grads[id].get_or_insert_with(|| vec![T::zero(); nodes[id].value.len()]);
    f(buf);
}

fn take_buffer<T: Real>(nodes: &[Node<T>], grads: &mut [Option<Vec<T>>], id: NodeId) -> Option<Vec<T>> {
    if !nodes[id].requires_grad {
        return None;
    }
    Some(
        grads[id]
            .take()
            .unwrap_or_else(|| vec![T::zero(); nodes[id].value.len()]),
    )
}

fn restore<T>(grads: &mut [Option<Vec<T>>], id: NodeId, buf: Option<Vec<T>>) {
    if buf.is_some() {
        grads[id] = buf;
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value_ref(self.id).shape().to_vec()
    }

    /// Copy of the recorded value.
    pub fn value(&self) -> Tensor<T> {
        self.tape.value_ref(self.id).clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn same_tape(&self, other: Var<'_, T>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(TensorError::NotOnTape)
        }
    }

    /// Elementwise sum. `other` may also be a `[C]` bias broadcast against
    /// `[B, C, ...]`.
    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(other)?;
        let a = self.tape.value_ref(self.id);
        let b = self.tape.value_ref(other.id);
        if a.shape() == b.shape() {
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
            let value = Tensor::new(a.shape().to_vec(), data)?;
            drop((a, b));
            return self.tape.record(
                "add",
                value,
                Op::Add {
                    a: self.id,
                    b: other.id,
                },
            );
        }
        if b.shape().len() == 1 && a.shape().len() >= 2 && a.shape()[1] == b.shape()[0] {
            let outer = a.shape()[0];
            let channels = a.shape()[1];
            let inner = numel(&a.shape()[2..]);
            let mut data = a.data().to_vec();
            for o in 0..outer {
                for c in 0..channels {
                    for v in &mut data[(o * channels + c) * inner..][..inner] {
                        *v = *v + b.data()[c];
                    }
                }
            }
            let value = Tensor::new(a.shape().to_vec(), data)?;
            drop((a, b));
            return self.tape.record(
                "add",
                value,
                Op::AddBias {
                    a: self.id,
                    b: other.id,
                    outer,
                    channels,
                    inner,
                },
            );
        }
        Err(TensorError::ShapeMismatch {
            op: "add",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        })
    }

    /// `[M, K] x [K, N] -> [M, N]`
    pub fn matmul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_tape(other)?;
        let a = self.tape.value_ref(self.id);
        let b = self.tape.value_ref(other.id);
        for s in [a.shape(), b.shape()] {
            if s.len() != 2 {
                return Err(TensorError::Rank {
                    op: "matmul",
                    expected: 2,
                    shape: s.to_vec(),
                });
            }
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        if b.shape()[0] != k {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        kernels::matmul(a.data(), b.data(), m, k, n, &mut out);
        drop((a, b));
        self.tape.record(
            "matmul",
            Tensor::new(vec![m, n], out)?,
            Op::MatMul {
                a: self.id,
                b: other.id,
                m,
                k,
                n,
            },
        )
    }

    /// Zero-padded cross-correlation: `[B, Cin, L]` with weight `[Cout, Cin, K]`
    /// and bias `[Cout]` gives `[B, Cout, L + 2 pad - K + 1]`.
    pub fn conv1d(self, weight: Var<'t, T>, bias: Var<'t, T>, pad: usize) -> Result<Var<'t, T>> {
        self.same_tape(weight)?;
        self.same_tape(bias)?;
        let x = self.tape.value_ref(self.id);
        let w = self.tape.value_ref(weight.id);
        let b = self.tape.value_ref(bias.id);
        for (s, rank) in [(x.shape(), 3), (w.shape(), 3), (b.shape(), 1)] {
            if s.len() != rank {
                return Err(TensorError::Rank {
                    op: "conv1d",
                    expected: rank,
                    shape: s.to_vec(),
                });
            }
        }
        let dims = ConvDims {
            batch: x.shape()[0],
            cin: x.shape()[1],
            len: x.shape()[2],
            cout: w.shape()[0],
            kernel: w.shape()[2],
            pad,
        };
        if w.shape()[1] != dims.cin {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                left: x.shape().to_vec(),
                right: w.shape().to_vec(),
            });
        }
        if b.shape()[0] != dims.cout {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d bias",
                left: w.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let padded = dims.len + 2 * pad;
        if dims.kernel == 0 || dims.kernel > padded {
            return Err(TensorError::KernelTooLarge {
                kernel: dims.kernel,
                padded,
            });
        }
        let lout = dims.out_len();
        let mut out = vec![T::zero(); dims.batch * dims.cout * lout];
        kernels::conv1d_forward(dims, x.data(), w.data(), b.data(), &mut out);
        drop((x, w, b));
        self.tape.record(
            "conv1d",
            Tensor::new(vec![dims.batch, dims.cout, lout], out)?,
            Op::Conv1d {
                input: self.id,
                weight: weight.id,
                bias: bias.id,
                dims,
            },
        )
    }

    /// Non-overlapping max pool with stride `k`; a trailing partial window is dropped.
    pub fn maxpool1d(self, k: usize) -> Result<Var<'t, T>> {
        if k < 1 {
            return Err(TensorError::PoolKernel);
        }
        let x = self.tape.value_ref(self.id);
        if x.shape().len() != 3 {
            return Err(TensorError::Rank {
                op: "maxpool1d",
                expected: 3,
                shape: x.shape().to_vec(),
            });
        }
        let (b, c, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let lout = l / k;
        let mut out = vec![T::zero(); b * c * lout];
        let argmax = kernels::maxpool1d_forward(x.data(), b * c, l, k, &mut out);
        drop(x);
        self.tape.record(
            "maxpool1d",
            Tensor::new(vec![b, c, lout], out)?,
            Op::MaxPool1d { input: self.id, argmax },
        )
    }

    /// `x * sigmoid(x)`
    pub fn silu(self) -> Result<Var<'t, T>> {
        let x = self.tape.value_ref(self.id);
        let data = x.data().iter().map(|&v| v * kernels::sigmoid(v)).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        drop(x);
        self.tape.record("silu", value, Op::Silu { x: self.id })
    }

    /// Inverted dropout. Identity in eval mode or at rate 0.
    pub fn dropout(self, rate: f64, mode: Mode, rng: Option<&mut Rng>) -> Result<Var<'t, T>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::DropoutRate(rate));
        }
        if mode == Mode::Eval {
            return Ok(self);
        }
        let rng = rng.ok_or(TensorError::MissingRng)?;
        if rate == 0.0 {
            return Ok(self);
        }
        let keep = 1.0 - rate;
        let scale = T::lit(1.0 / keep);
        let x = self.tape.value_ref(self.id);
        let mask: Vec<T> = (0..x.len())
            .map(|_| if rng.bernoulli(keep) { scale } else { T::zero() })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        drop(x);
        self.tape.record("dropout", value, Op::Dropout { x: self.id, mask })
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Var<'t, T>> {
        let x = self.tape.value_ref(self.id);
        let value = Tensor::new(shape, x.data().to_vec())?;
        drop(x);
        self.tape.record("reshape", value, Op::Reshape { x: self.id })
    }

    /// `[B, ...] -> [B, prod(...)]`, row-major.
    pub fn flatten(self) -> Result<Var<'t, T>> {
        let shape = self.shape();
        if shape.is_empty() {
            return Err(TensorError::Rank {
                op: "flatten",
                expected: 2,
                shape,
            });
        }
        self.reshape(vec![shape[0], numel(&shape[1..])])
    }

    pub fn sum(self) -> Result<Var<'t, T>> {
        let x = self.tape.value_ref(self.id);
        let s: T = x.data().iter().copied().sum();
        drop(x);
        self.tape.record("sum", Tensor::scalar(s), Op::Sum { x: self.id })
    }

    /// Mean over the batch of `-log softmax(logits)[target]`.
    pub fn softmax_cross_entropy(self, targets: &[usize]) -> Result<Var<'t, T>> {
        let l = self.tape.value_ref(self.id);
        if l.shape().len() != 2 {
            return Err(TensorError::Rank {
                op: "softmax_cross_entropy",
                expected: 2,
                shape: l.shape().to_vec(),
            });
        }
        let (rows, classes) = (l.shape()[0], l.shape()[1]);
        if targets.len() != rows || rows == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                left: l.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= classes) {
            return Err(TensorError::TargetOutOfRange { target: bad, classes });
        }
        let terms = kernels::cross_entropy_rows(l.data(), classes, targets);
        let loss = terms.into_iter().sum::<T>() / T::lit(rows as f64);
        drop(l);
        self.tape.record(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: self.id,
                targets: targets.to_vec(),
                classes,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, data).unwrap()
    }

    #[test]
    fn add_identity_and_definition() {
        let tape = Tape::new();
        let a = tape.constant(t(vec![2], &[1.0, 2.0]));
        let z = tape.constant(t(vec![2], &[0.0, 0.0]));
        assert_eq!(a.add(z).unwrap().value().data(), &[1.0, 2.0]);
        let b = tape.constant(t(vec![2], &[3.0, 4.0]));
        assert_eq!(a.add(b).unwrap().value().data(), &[4.0, 6.0]);
    }

    #[test]
    fn add_gradient_is_ones() {
        let tape = Tape::new();
        let a = tape.param(t(vec![3], &[0.3, -1.0, 2.0]));
        let b = tape.param(t(vec![3], &[5.0, 6.0, 7.0]));
        let loss = a.add(b).unwrap().sum().unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn bias_broadcast_and_gradient() {
        let tape = Tape::new();
        let x = tape.constant(t(vec![2, 2, 3], &[0.0; 12]));
        let b = tape.param(t(vec![2], &[1.0, -1.0]));
        let y = x.add(b).unwrap();
        assert_eq!(
            y.value().data(),
            &[1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0]
        );
        let g = tape.backward(y.sum().unwrap()).unwrap();
        assert_eq!(g.get(b).unwrap().data(), &[6.0, 6.0]);
    }

    #[test]
    fn add_shape_mismatch() {
        let tape = Tape::new();
        let a = tape.constant(t(vec![2], &[1.0, 2.0]));
        let b = tape.constant(t(vec![3], &[1.0, 2.0, 3.0]));
        assert!(matches!(a.add(b), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn matmul_dot_product_and_identity() {
        let tape = Tape::new();
        let a = tape.constant(t(vec![1, 2], &[1.0, 2.0]));
        let b = tape.constant(t(vec![2, 1], &[3.0, 4.0]));
        assert_eq!(a.matmul(b).unwrap().value().data(), &[11.0]);

        let m = tape.constant(t(vec![2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let eye = tape.constant(t(vec![3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
        assert_eq!(m.matmul(eye).unwrap().value(), m.value());
    }

    #[test]
    fn matmul_inner_mismatch() {
        let tape = Tape::new();
        let a = tape.constant(t(vec![2, 3], &[0.0; 6]));
        let b = tape.constant(t(vec![2, 3], &[0.0; 6]));
        assert!(matches!(a.matmul(b), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn conv1d_identity_kernel() {
        let tape = Tape::new();
        let x = tape.constant(t(vec![1, 1, 5], &[3.0, -1.0, 4.0, 1.0, 5.0]));
        let w = tape.constant(t(vec![1, 1, 3], &[0.0, 1.0, 0.0]));
        let b = tape.constant(t(vec![1], &[0.0]));
        assert_eq!(x.conv1d(w, b, 1).unwrap().value(), x.value());
    }

    #[test]
    fn conv1d_box_kernel() {
        let tape = Tape::new();
        let x = tape.constant(t(vec![1, 1, 4], &[1.0, 2.0, 3.0, 4.0]));
        let w = tape.constant(t(vec![1, 1, 3], &[1.0, 1.0, 1.0]));
        let b = tape.constant(t(vec![1], &[0.0]));
        assert_eq!(x.conv1d(w, b, 1).unwrap().value().data(), &[3.0, 6.0, 9.0, 7.0]);
    }

    #[test]
    fn conv1d_kernel_too_large() {
        let tape = Tape::new();
        let x = tape.constant(t(vec![1, 1, 2], &[1.0, 2.0]));
        let w = tape.constant(t(vec![1, 1, 5], &[1.0; 5]));
        let b = tape.constant(t(vec![1], &[0.0]));
        assert!(matches!(
            x.conv1d(w, b, 1),
            Err(TensorError::KernelTooLarge { kernel: 5, padded: 4 })
        ));
        // Large padding with an empty valid range for some taps must not panic.
        let x = tape.constant(t(vec![1, 1, 1], &[2.0]));
        let w = tape.constant(t(vec![1, 1, 7], &[1.0; 7]));
        assert_eq!(x.conv1d(w, b, 3).unwrap().value().data(), &[2.0]);
    }

    #[test]
    fn maxpool_examples() {
        let tape = Tape::new();
        let x = tape.constant(t(vec![1, 1, 4], &[1.0, 3.0, 2.0, 5.0]));
        assert_eq!(x.maxpool1d(2).unwrap().value().data(), &[3.0, 5.0]);
        let x = tape.constant(t(vec![1, 1, 5], &[5.0, 1.0, 2.0, 2.0, 7.0]));
        assert_eq!(x.maxpool1d(2).unwrap().value().data(), &[5.0, 2.0]);
        assert!(matches!(x.maxpool1d(0), Err(TensorError::PoolKernel)));
    }

    #[test]
    fn maxpool_tie_goes_to_first_index() {
        let tape = Tape::new();
        let x = tape.param(t(vec![1, 1, 6], &[2.0; 6]));
        let y = x.maxpool1d(2).unwrap();
        assert_eq!(y.value().data(), &[2.0, 2.0, 2.0]);
        let g = tape.backward(y.sum().unwrap()).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn silu_values() {
        let tape = Tape::new();
        let x = tape.constant(t(vec![2], &[0.0, 1.0]));
        let y = x.silu().unwrap().value();
        assert_eq!(y.data()[0], 0.0);
        assert!((y.data()[1] - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn dropout_identities() {
        let tape = Tape::new();
        let x = tape.constant(t(vec![4], &[1.5, -2.0, 0.25, 9.0]));
        let mut rng = Rng::new(1);
        let e = x.dropout(0.5, Mode::Eval, None).unwrap();
        assert_eq!(e.value(), x.value());
        let z = x.dropout(0.0, Mode::Train, Some(&mut rng)).unwrap();
        assert_eq!(z.value(), x.value());
        assert!(matches!(
            x.dropout(1.0, Mode::Train, Some(&mut rng)),
            Err(TensorError::DropoutRate(_))
        ));
        assert!(matches!(
            x.dropout(0.2, Mode::Train, None),
            Err(TensorError::MissingRng)
        ));
    }

    #[test]
    fn dropout_mean_preserved() {
        let tape = Tape::new();
        let n = 1_000_000;
        let x = tape.constant(Tensor::full(vec![n], 1.0f64));
        let mut rng = Rng::new(2024);
        let y = x.dropout(0.15, Mode::Train, Some(&mut rng)).unwrap().value();
        let mean = y.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn dropout_gradient_uses_mask() {
        let tape = Tape::new();
        let x = tape.param(Tensor::full(vec![64], 1.0f64));
        let mut rng = Rng::new(5);
        let y = x.dropout(0.5, Mode::Train, Some(&mut rng)).unwrap();
        let g = tape.backward(y.sum().unwrap()).unwrap();
        assert_eq!(g.get(x).unwrap().data(), y.value().data());
    }

    #[test]
    fn flatten_layout() {
        let tape = Tape::new();
        let x = tape.constant(t(vec![1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let f = x.flatten().unwrap();
        assert_eq!(f.shape(), vec![1, 4]);
        assert_eq!(f.value().data(), &[1.0, 2.0, 3.0, 4.0]);
        let big = tape.constant(Tensor::zeros(vec![4, 64, 8]));
        assert_eq!(big.flatten().unwrap().shape(), vec![4, 512]);
    }

    #[test]
    fn cross_entropy_values() {
        let tape = Tape::new();
        let l = tape.constant(t(vec![1, 3], &[0.7, 0.7, 0.7]));
        let loss = l.softmax_cross_entropy(&[2]).unwrap().value().data()[0];
        assert!((loss - 3f64.ln()).abs() < 1e-12);

        let l = tape.constant(t(vec![1, 3], &[10.0, 0.0, 0.0]));
        let loss = l.softmax_cross_entropy(&[0]).unwrap().value().data()[0];
        let expected = (1.0 + 2.0 * (-10f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-15);
        assert!((loss - 9.08e-5).abs() < 1e-7);

        assert!(matches!(
            l.softmax_cross_entropy(&[3]),
            Err(TensorError::TargetOutOfRange { target: 3, classes: 3 })
        ));
    }

    #[test]
    fn cross_entropy_gradient_rows_sum_to_zero() {
        let tape = Tape::new();
        let l = tape.param(t(vec![3, 3], &[0.2, -1.0, 3.0, 1.0, 1.0, 1.0, -4.0, 2.5, 0.0]));
        let loss = l.softmax_cross_entropy(&[0, 1, 2]).unwrap();
        let g = tape.backward(loss).unwrap();
        for row in g.get(l).unwrap().data().chunks(3) {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn backward_edge_cases() {
        let tape = Tape::new();
        let c = tape.constant(Tensor::scalar(3.0f64));
        assert!(tape.backward(c).unwrap().is_empty());

        let w = tape.param(t(vec![2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let g = tape.backward(w.sum().unwrap()).unwrap();
        assert_eq!(g.get(w).unwrap().data(), &[1.0; 4]);

        assert!(matches!(tape.backward(w), Err(TensorError::NotScalar(_))));

        let other = Tape::new();
        let foreign = other.param(Tensor::scalar(1.0f64));
        assert!(matches!(tape.backward(foreign), Err(TensorError::NotOnTape)));
    }

    #[test]
    fn unreached_param_gets_zero_gradient() {
        let tape = Tape::new();
        let used = tape.param(t(vec![2], &[1.0, 2.0]));
        let unused = tape.param(t(vec![3], &[1.0, 2.0, 3.0]));
        let g = tape.backward(used.sum().unwrap()).unwrap();
        assert_eq!(g.get(unused).unwrap().data(), &[0.0; 3]);
    }
}
