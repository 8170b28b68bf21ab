//! Reverse-mode differentiation over an explicit operation tape.
//!
//! Every differentiable op appends a node holding its output value and the
//! ids of its inputs. Nodes can only reference earlier nodes, so the tape is
//! topologically ordered by construction and backward is a single reverse
//! sweep.

use std::sync::Arc;

use crate::error::{shape_err, Error, Result};
use crate::ops::{self, activation, conv, layout, linalg, norm, pool, Conv2dSpec};
use crate::param::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{split_axis, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Input,
    Param(ParamId),
    Conv2d { x: NodeId, w: NodeId, b: Option<NodeId>, spec: Conv2dSpec },
    MaxPool { x: NodeId, argmax: Vec<usize> },
    AvgPool { x: NodeId, window: usize, stride: usize },
    Gelu(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Softmax { x: NodeId, axis: usize },
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, axis: usize, stats: norm::NormStats<T> },
    MatMul { a: NodeId, b: NodeId },
    MatMulNt { a: NodeId, b: NodeId },
    Linear { x: NodeId, w: NodeId, b: Option<NodeId> },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, T),
    /// `b` broadcast along `axis` where it has extent 1.
    MulBroadcast { a: NodeId, b: NodeId, axis: usize },
    Concat { a: NodeId, b: NodeId, axis: usize },
    Slice { x: NodeId, axis: usize, start: usize },
    ToTokens(NodeId),
    ToMap(NodeId),
    Reshape(NodeId),
    MeanAxis { x: NodeId, axis: usize },
    /// Row softmax of `scores * scale + table[index]` (attention probabilities).
    BiasedSoftmax { scores: NodeId, bias: Option<(NodeId, Arc<[u32]>)>, scale: T },
    Mask { x: NodeId, mask: Tensor<T> },
    Sum(NodeId),
    CrossEntropy { logits: NodeId, labels: Vec<usize>, log_probs: Tensor<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Single-writer record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradient of the loss with respect to every node that reaches it.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, node: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(node.0).and_then(Option::as_ref)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, name: &'static str) -> Result<NodeId> {
        value.ensure_finite(name)?;
        self.nodes.push(Node { value, op });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Constant leaf (inputs, masks, projection targets).
    pub fn input(&mut self, value: Tensor<T>) -> Result<NodeId> {
        self.push(value, Op::Input, "input")
    }

    /// Leaf bound to a registered parameter; its gradient is routed back to
    /// the store by [`Tape::backward_into`].
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<NodeId> {
        self.push(store.tensor(id).clone(), Op::Param(id), "param")
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>, spec: Conv2dSpec) -> Result<NodeId> {
        let y = conv::conv2d(self.value(x), self.value(w), b.map(|b| self.value(b)), spec)?;
        self.push(y, Op::Conv2d { x, w, b, spec }, "conv2d")
    }

    pub fn max_pool2d(&mut self, x: NodeId, window: usize, stride: usize) -> Result<NodeId> {
        let (y, argmax) = pool::max_pool2d_with_indices(self.value(x), window, stride)?;
        self.push(y, Op::MaxPool { x, argmax }, "max_pool2d")
    }

    pub fn avg_pool2d(&mut self, x: NodeId, window: usize, stride: usize) -> Result<NodeId> {
        let y = pool::avg_pool2d(self.value(x), window, stride)?;
        self.push(y, Op::AvgPool { x, window, stride }, "avg_pool2d")
    }

    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        let y = ops::gelu(self.value(x));
        self.push(y, Op::Gelu(x), "gelu")
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let y = ops::relu(self.value(x));
        self.push(y, Op::Relu(x), "relu")
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let y = ops::sigmoid(self.value(x));
        self.push(y, Op::Sigmoid(x), "sigmoid")
    }

    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let y = ops::softmax(self.value(x), axis)?;
        self.push(y, Op::Softmax { x, axis }, "softmax")
    }

    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, axis: usize) -> Result<NodeId> {
        let (y, stats) = norm::layer_norm_with_stats(self.value(x), self.value(gamma), self.value(beta), axis)?;
        self.push(y, Op::LayerNorm { x, gamma, beta, axis, stats }, "layer_norm")
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = linalg::matmul(self.value(a), self.value(b))?;
        self.push(y, Op::MatMul { a, b }, "matmul")
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = linalg::matmul_nt(self.value(a), self.value(b))?;
        self.push(y, Op::MatMulNt { a, b }, "matmul_nt")
    }

    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let y = linalg::linear(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        self.push(y, Op::Linear { x, w, b }, "linear")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.value(a).zip_map(self.value(b), |p, q| p + q)?;
        self.push(y, Op::Add(a, b), "add")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = self.value(a).zip_map(self.value(b), |p, q| p * q)?;
        self.push(y, Op::Mul(a, b), "mul")
    }

    pub fn scale(&mut self, x: NodeId, k: T) -> Result<NodeId> {
        let y = self.value(x).scale(k);
        self.push(y, Op::Scale(x, k), "scale")
    }

    /// `a * b` where `b` matches `a` except for extent 1 along `axis`.
    pub fn mul_broadcast(&mut self, a: NodeId, b: NodeId, axis: usize) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ok = sa.len() == sb.len()
            && axis < sa.len()
            && sb[axis] == 1
            && sa.iter().zip(sb).enumerate().all(|(i, (x, y))| i == axis || x == y);
        if !ok {
            return Err(shape_err!("cannot broadcast {sb:?} over {sa:?} along axis {axis}"));
        }
        let (outer, extent, inner) = split_axis(sa, axis)?;
        let bd = self.value(b).data();
        let mut y = self.value(a).clone();
        let yd = y.data_mut();
        for o in 0..outer {
            for e in 0..extent {
                let row = &mut yd[(o * extent + e) * inner..][..inner];
                for (v, &m) in row.iter_mut().zip(&bd[o * inner..(o + 1) * inner]) {
                    *v *= m;
                }
            }
        }
        self.push(y, Op::MulBroadcast { a, b, axis }, "mul_broadcast")
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId, axis: usize) -> Result<NodeId> {
        let y = layout::concat_axis(self.value(a), self.value(b), axis)?;
        self.push(y, Op::Concat { a, b, axis }, "concat")
    }

    /// Channel concatenation of two NCHW maps, `a` first.
    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let y = layout::concat_channels(self.value(a), self.value(b))?;
        self.push(y, Op::Concat { a, b, axis: 1 }, "concat_channels")
    }

    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let y = layout::slice_axis(self.value(x), axis, start, len)?;
        self.push(y, Op::Slice { x, axis, start }, "slice")
    }

    pub fn to_tokens(&mut self, x: NodeId) -> Result<NodeId> {
        let y = layout::map_to_tokens(self.value(x))?;
        self.push(y, Op::ToTokens(x), "to_tokens")
    }

    pub fn to_map(&mut self, x: NodeId, h: usize, w: usize) -> Result<NodeId> {
        let y = layout::tokens_to_map(self.value(x), h, w)?;
        self.push(y, Op::ToMap(x), "to_map")
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let y = self.value(x).clone().reshape(shape)?;
        self.push(y, Op::Reshape(x), "reshape")
    }

    pub fn mean_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let y = layout::mean_axis(self.value(x), axis)?;
        self.push(y, Op::MeanAxis { x, axis }, "mean_axis")
    }

    /// Row-wise softmax of `scores * scale + table[index]` over a
    /// `[rows, cols]` score matrix, where `index` maps each score entry to a
    /// flat position in `table` (a relative position bias).
    pub fn biased_softmax(&mut self, scores: NodeId, scale: T, bias: Option<(NodeId, Arc<[u32]>)>) -> Result<NodeId> {
        let s = self.value(scores);
        let (rows, cols) = s.dims2()?;
        let mut z = s.scale(scale);
        if let Some((table, index)) = &bias {
            let t = self.value(*table).data();
            if index.len() != rows * cols {
                return Err(shape_err!("bias index has {} entries for a {rows}x{cols} score matrix", index.len()));
            }
            if let Some(&bad) = index.iter().find(|&&i| i as usize >= t.len()) {
                return Err(shape_err!("bias index {bad} out of range for table of {}", t.len()));
            }
            for (v, &i) in z.data_mut().iter_mut().zip(index.iter()) {
                *v += t[i as usize];
            }
        }
        let y = activation::softmax(&z, 1)?;
        self.push(y, Op::BiasedSoftmax { scores, bias, scale }, "attention_softmax")
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&mut self, x: NodeId, mask: Tensor<T>) -> Result<NodeId> {
        let y = self.value(x).zip_map(&mask, |a, m| a * m)?;
        self.push(y, Op::Mask { x, mask }, "dropout")
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let y = Tensor::scalar(self.value(x).sum());
        self.push(y, Op::Sum(x), "sum")
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `logits[batch, classes]`, computed in log space.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let (rows, classes) = self.value(logits).dims2()?;
        if labels.len() != rows {
            return Err(Error::Contract(format!("{} labels for {rows} logit rows", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Contract(format!("label {bad} out of range for {classes} classes")));
        }
        let log_probs = activation::log_softmax_rows(self.value(logits))?;
        let nll: T = labels.iter().enumerate().map(|(r, &l)| -log_probs.data()[r * classes + l]).sum();
        let y = Tensor::scalar(nll / T::from_usize_lossy(rows));
        self.push(y, Op::CrossEntropy { logits, labels: labels.to_vec(), log_probs }, "cross_entropy")
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, node {} has shape {:?}",
                loss.0,
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Clears every gradient slot in `store` and writes `∂loss/∂param`.
    /// Parameters the loss does not reach are left at zero.
    pub fn backward_into(&self, loss: NodeId, store: &mut ParamStore<T>) -> Result<()> {
        let grads = self.backward(loss)?;
        store.zero_grad();
        self.accumulate_param_grads(&grads, store);
        Ok(())
    }

    /// Adds parameter gradients into the store's slots without clearing them.
    pub fn accumulate_param_grads(&self, grads: &Gradients<T>, store: &mut ParamStore<T>) {
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, grads.grads[i].as_ref()) {
                let p = store.get_mut(*id);
                if p.trainable {
                    p.grad.add_assign(g);
                }
            }
        }
    }

    /// `(param id, gradient)` pairs, one per parameter leaf reached by the loss.
    pub fn param_grads<'g>(&self, grads: &'g Gradients<T>) -> Vec<(ParamId, &'g Tensor<T>)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match (&n.op, grads.grads[i].as_ref()) {
                (Op::Param(id), Some(g)) => Some((*id, g)),
                _ => None,
            })
            .collect()
    }

    fn backprop_node(&self, idx: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let mut acc = |id: NodeId, delta: Tensor<T>| {
            debug_assert!(id.0 < idx, "tape references must point backwards");
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        let node = &self.nodes[idx];
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Conv2d { x, w, b, spec } => {
                let (gx, gw, gb) = conv::conv2d_backward(self.value(*x), self.value(*w), b.is_some(), *spec, g)?;
                acc(*x, gx);
                acc(*w, gw);
                if let (Some(b), Some(gb)) = (b, gb) {
                    acc(*b, gb);
                }
            }
            Op::MaxPool { x, argmax } => {
                acc(*x, pool::max_pool2d_backward(self.shape(*x), argmax, g)?);
            }
            Op::AvgPool { x, window, stride } => {
                acc(*x, pool::avg_pool2d_backward(self.shape(*x), *window, *stride, g)?);
            }
            Op::Gelu(x) => {
                acc(*x, self.value(*x).zip_map(g, |v, gv| gv * activation::gelu_grad_scalar(v))?);
            }
            Op::Relu(x) => {
                acc(*x, self.value(*x).zip_map(g, |v, gv| if v > T::zero() { gv } else { T::zero() })?);
            }
            Op::Sigmoid(x) => {
                acc(*x, node.value.zip_map(g, |s, gv| gv * s * (T::one() - s))?);
            }
            Op::Softmax { x, axis } => {
                acc(*x, activation::softmax_backward(&node.value, g, *axis)?);
            }
            Op::LayerNorm { x, gamma, beta, axis, stats } => {
                let (gx, gg, gb) = norm::layer_norm_backward(stats, self.value(*gamma), *axis, g)?;
                acc(*x, gx);
                acc(*gamma, gg.reshape(self.shape(*gamma))?);
                acc(*beta, gb.reshape(self.shape(*beta))?);
            }
            Op::MatMul { a, b } => {
                acc(*a, linalg::matmul_nt(g, self.value(*b))?);
                acc(*b, linalg::matmul_tn(self.value(*a), g)?);
            }
            Op::MatMulNt { a, b } => {
                acc(*a, linalg::matmul(g, self.value(*b))?);
                acc(*b, linalg::matmul_tn(g, self.value(*a))?);
            }
            Op::Linear { x, w, b } => {
                acc(*x, linalg::matmul(g, self.value(*w))?);
                acc(*w, linalg::matmul_tn(g, self.value(*x))?);
                if let Some(b) = b {
                    acc(*b, linalg::column_sums(g)?.reshape(self.shape(*b))?);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(self.value(*b), |gv, v| gv * v)?);
                acc(*b, g.zip_map(self.value(*a), |gv, v| gv * v)?);
            }
            Op::Scale(x, k) => acc(*x, g.scale(*k)),
            Op::MulBroadcast { a, b, axis } => {
                let (outer, extent, inner) = split_axis(self.shape(*a), *axis)?;
                let (ad, bd, gd) = (self.value(*a).data(), self.value(*b).data(), g.data());
                let mut ga = vec![T::zero(); ad.len()];
                let mut gb = vec![T::zero(); bd.len()];
                for o in 0..outer {
                    for e in 0..extent {
                        let base = (o * extent + e) * inner;
                        for i in 0..inner {
                            ga[base + i] = gd[base + i] * bd[o * inner + i];
                            gb[o * inner + i] += gd[base + i] * ad[base + i];
                        }
                    }
                }
                acc(*a, Tensor::from_parts(self.shape(*a), ga)?);
                acc(*b, Tensor::from_parts(self.shape(*b), gb)?);
            }
            Op::Concat { a, b, axis } => {
                let la = self.shape(*a)[*axis];
                let lb = self.shape(*b)[*axis];
                acc(*a, layout::slice_axis(g, *axis, 0, la)?);
                acc(*b, layout::slice_axis(g, *axis, la, lb)?);
            }
            Op::Slice { x, axis, start } => {
                let mut gx = Tensor::zeros(self.shape(*x));
                layout::scatter_axis(&mut gx, g, *axis, *start)?;
                acc(*x, gx);
            }
            Op::ToTokens(x) => {
                let (_, _, h, w) = self.value(*x).dims4()?;
                acc(*x, layout::tokens_to_map(g, h, w)?);
            }
            Op::ToMap(x) => acc(*x, layout::map_to_tokens(g)?),
            Op::Reshape(x) => acc(*x, g.clone().reshape(self.shape(*x))?),
            Op::MeanAxis { x, axis } => {
                let shape = self.shape(*x);
                let (_, extent, inner) = split_axis(shape, *axis)?;
                let inv = T::one() / T::from_usize_lossy(extent);
                let gd = g.data();
                let gx = Tensor::from_fn(shape, |flat| {
                    let o = flat / (extent * inner);
                    let i = flat % inner;
                    gd[o * inner + i] * inv
                });
                acc(*x, gx);
            }
            Op::BiasedSoftmax { scores, bias, scale } => {
                let gz = activation::softmax_backward(&node.value, g, 1)?;
                if let Some((table, index)) = bias {
                    let mut gt = Tensor::zeros(self.shape(*table));
                    let d = gt.data_mut();
                    for (&i, &gv) in index.iter().zip(gz.data()) {
                        d[i as usize] += gv;
                    }
                    acc(*table, gt);
                }
                acc(*scores, gz.scale(*scale));
            }
            Op::Mask { x, mask } => acc(*x, g.zip_map(mask, |gv, m| gv * m)?),
            Op::Sum(x) => acc(*x, Tensor::full(self.shape(*x), g.data()[0])),
            Op::CrossEntropy { logits, labels, log_probs } => {
                let (rows, classes) = log_probs.dims2()?;
                let scale = g.data()[0] / T::from_usize_lossy(rows);
                let mut gl = log_probs.map(|lp| lp.exp() * scale);
                for (r, &l) in labels.iter().enumerate() {
                    gl.data_mut()[r * classes + l] -= scale;
                }
                acc(*logits, gl);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::ParamKind;

    #[test]
    fn grad_of_sum_is_ones() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("x", Tensor::from_fn(&[2, 3], |i| i as f64), ParamKind::Weight).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&store, id).unwrap();
        let s = tape.sum(x).unwrap();
        tape.backward_into(s, &mut store).unwrap();
        assert!(store.get(id).grad.data().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn grad_of_half_sum_sq_is_x() {
        let mut store = ParamStore::<f64>::new();
        let x0 = Tensor::from_fn(&[5], |i| i as f64 - 2.5);
        let id = store.add("x", x0.clone(), ParamKind::Weight).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&store, id).unwrap();
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let half = tape.scale(s, 0.5).unwrap();
        tape.backward_into(half, &mut store).unwrap();
        assert_eq!(store.get(id).grad, x0);
    }

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let mut tape = Tape::<f32>::new();
        let x = tape.input(Tensor::zeros(&[3])).unwrap();
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn unreachable_params_hold_zero() {
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", Tensor::ones(&[2]), ParamKind::Weight).unwrap();
        let b = store.add("b", Tensor::ones(&[2]), ParamKind::Weight).unwrap();
        store.get_mut(b).grad = Tensor::full(&[2], 7.0);
        let mut tape = Tape::new();
        let na = tape.param(&store, a).unwrap();
        let _nb = tape.param(&store, b).unwrap();
        let s = tape.sum(na).unwrap();
        tape.backward_into(s, &mut store).unwrap();
        assert!(store.get(b).grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn shared_node_accumulates() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::full(&[3], 2.0)).unwrap();
        let y = tape.add(x, x).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn nan_is_reported_with_op_name() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::full(&[1], 1e200)).unwrap();
        let err = tape.mul(x, x).unwrap_err();
        assert!(matches!(err, Error::NonFinite { op: "mul", .. }));
    }

    #[test]
    fn cross_entropy_uniform_and_confident() {
        let mut tape = Tape::<f64>::new();
        let l = tape.input(Tensor::zeros(&[1, 4])).unwrap();
        let ce = tape.cross_entropy(l, &[2]).unwrap();
        assert!((tape.value(ce).data()[0] - 4f64.ln()).abs() < 1e-12);

        let l = tape.input(Tensor::new(&[1, 4], vec![0.0, 40.0, 0.0, 0.0]).unwrap()).unwrap();
        let ce = tape.cross_entropy(l, &[1]).unwrap();
        assert!(tape.value(ce).data()[0] < 1e-10);

        assert!(matches!(tape.cross_entropy(l, &[4]), Err(Error::Contract(_))));
    }
}
