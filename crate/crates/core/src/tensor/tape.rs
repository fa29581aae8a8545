use alloc::vec;
use alloc::vec::Vec;

use super::{ParamId, ParamStore, Shape, Tensor, TensorError};
use crate::math;

/// Lower clamp applied to probabilities before taking their log.
pub const PROB_FLOOR: f64 = 1e-12;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    None,
    // right operand is a single row repeated over the left operand's rows
    RowRight,
    RowLeft,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize, Broadcast),
    Mul(usize, usize),
    Scale(usize, f64),
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { input: usize, axis: usize, start: usize },
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Softmax(usize),
    LogSoftmax(usize),
    Embed { table: usize, ids: Vec<usize> },
    Mean { input: usize, axis: usize },
    Transpose(usize),
    Sum(usize),
    CrossEntropy { logits: usize, targets: Vec<usize>, probs: Vec<f64> },
    LayerNorm { x: usize, gamma: usize, beta: usize, xhat: Vec<f64>, inv_std: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records operations in execution order so gradients can be propagated in
/// reverse. Nodes are append-only; every input precedes its outputs.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize), TensorError> {
    match t.dims() {
        [r, c] => Ok((*r, *c)),
        _ => Err(TensorError::ShapeMismatch {
            op,
            left: t.shape(),
            right: Shape::matrix(0, 0),
        }),
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant (or input) tensor.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records parameter `id`; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.param_vars.len() <= id.0 {
            self.param_vars.resize(id.0 + 1, None);
        }
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = rank2("matmul", av)?;
        let (k2, n) = rank2("matmul", bv)?;
        if k != k2 {
            return Err(mismatch("matmul", av, bv));
        }
        let mut out = vec![0.0; m * n];
        let (ad, bd) = (av.data(), bv.data());
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = ad[i * k + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bd[p * n..(p + 1) * n];
                for (o, bvv) in orow.iter_mut().zip(brow) {
                    *o += x * bvv;
                }
            }
        }
        let t = Tensor::with_shape(Shape::matrix(m, n), out)?;
        Ok(self.push(t, Op::MatMul(a.0, b.0)))
    }

    /// Elementwise sum. A `1 x n` operand is broadcast over the rows of an
    /// `m x n` operand.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        let (mode, out) = if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
            (Broadcast::None, Tensor::with_shape(av.shape(), data)?)
        } else if bv.rows() == 1 && bv.cols() == av.cols() && av.shape().rank() >= 1 {
            let c = av.cols();
            let data = av
                .data()
                .iter()
                .enumerate()
                .map(|(i, x)| x + bv.data()[i % c])
                .collect();
            (Broadcast::RowRight, Tensor::with_shape(av.shape(), data)?)
        } else if av.rows() == 1 && av.cols() == bv.cols() && bv.shape().rank() >= 1 {
            let c = bv.cols();
            let data = bv
                .data()
                .iter()
                .enumerate()
                .map(|(i, y)| av.data()[i % c] + y)
                .collect();
            (Broadcast::RowLeft, Tensor::with_shape(bv.shape(), data)?)
        } else {
            return Err(mismatch("add", av, bv));
        };
        Ok(self.push(out, Op::Add(a.0, b.0, mode)))
    }

    /// `a - b` (recorded as `a + (-1) * b`).
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("mul", av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::with_shape(av.shape(), data)?;
        Ok(self.push(t, Op::Mul(a.0, b.0)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * c).collect();
        let t = Tensor {
            shape: av.shape(),
            data,
        };
        self.push(t, Op::Scale(a.0, c))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = match inputs.first() {
            Some(v) => self.value(*v),
            None => {
                return Err(TensorError::IndexOutOfRange {
                    op: "concat",
                    index: 0,
                    extent: 0,
                })
            }
        };
        let base = first.shape();
        if axis >= base.rank() {
            return Err(TensorError::IndexOutOfRange {
                op: "concat",
                index: axis,
                extent: base.rank(),
            });
        }
        let mut total = 0;
        for v in inputs {
            let s = self.value(*v).shape();
            if s.rank() != base.rank() || s.with_dim(axis, 1) != base.with_dim(axis, 1) {
                return Err(mismatch("concat", first, self.value(*v)));
            }
            total += s.dims()[axis];
        }
        let out_shape = base.with_dim(axis, total);
        let (outer, _, inner) = out_shape.split_at_axis(axis);
        let mut out = Vec::with_capacity(out_shape.numel());
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let ext = t.shape().dims()[axis];
                out.extend_from_slice(&t.data()[o * ext * inner..(o + 1) * ext * inner]);
            }
        }
        let t = Tensor::with_shape(out_shape, out)?;
        let ids = inputs.iter().map(|v| v.0).collect();
        Ok(self.push(t, Op::Concat { inputs: ids, axis }))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let av = self.value(a);
        let s = av.shape();
        if axis >= s.rank() {
            return Err(TensorError::IndexOutOfRange {
                op: "slice",
                index: axis,
                extent: s.rank(),
            });
        }
        let (outer, ext, inner) = s.split_at_axis(axis);
        if start + len > ext {
            return Err(TensorError::IndexOutOfRange {
                op: "slice",
                index: start + len,
                extent: ext,
            });
        }
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * ext * inner + start * inner;
            out.extend_from_slice(&av.data()[base..base + len * inner]);
        }
        let t = Tensor::with_shape(s.with_dim(axis, len), out)?;
        Ok(self.push(t, Op::Slice { input: a.0, axis, start }))
    }

    /// Row `r` of a rank-2 value as a `1 x n` tensor.
    pub fn row(&mut self, a: Var, r: usize) -> Result<Var, TensorError> {
        self.slice(a, 0, r, 1)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let av = self.value(a);
        let t = Tensor {
            shape: av.shape(),
            data: av.data().iter().map(|x| f(*x)).collect(),
        };
        self.push(t, op)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, math::tanh, Op::Tanh(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, math::sigmoid, Op::Sigmoid(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a.0))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let t = Tensor {
            shape: av.shape(),
            data: softmax_rows(av),
        };
        self.push(t, Op::Softmax(a.0))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let c = av.cols();
        let mut out = Vec::with_capacity(av.len());
        for row in av.data().chunks(c) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + math::ln(row.iter().map(|x| math::exp(x - m)).sum::<f64>());
            out.extend(row.iter().map(|x| x - lse));
        }
        let t = Tensor {
            shape: av.shape(),
            data: out,
        };
        self.push(t, Op::LogSoftmax(a.0))
    }

    /// Gathers rows of a `V x E` table.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let tv = self.value(table);
        let (v, e) = rank2("embed", tv)?;
        let mut out = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            if id >= v {
                return Err(TensorError::IndexOutOfRange {
                    op: "embed",
                    index: id,
                    extent: v,
                });
            }
            out.extend_from_slice(tv.row_slice(id));
        }
        let t = Tensor::with_shape(Shape::matrix(ids.len(), e), out)?;
        Ok(self.push(
            t,
            Op::Embed {
                table: table.0,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Mean over `axis`, keeping it with extent 1.
    pub fn mean(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        let av = self.value(a);
        let s = av.shape();
        if axis >= s.rank() {
            return Err(TensorError::IndexOutOfRange {
                op: "mean",
                index: axis,
                extent: s.rank(),
            });
        }
        let (outer, ext, inner) = s.split_at_axis(axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..ext {
                let src = &av.data()[(o * ext + k) * inner..(o * ext + k + 1) * inner];
                for (d, x) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += x;
                }
            }
        }
        let inv = 1.0 / ext as f64;
        out.iter_mut().for_each(|x| *x *= inv);
        let t = Tensor::with_shape(s.with_dim(axis, 1), out)?;
        Ok(self.push(t, Op::Mean { input: a.0, axis }))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let av = self.value(a);
        let (r, c) = rank2("transpose", av)?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = av.data()[i * c + j];
            }
        }
        let t = Tensor::with_shape(Shape::matrix(c, r), out)?;
        Ok(self.push(t, Op::Transpose(a.0)))
    }

    /// Sum of every element, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a.0))
    }

    /// Summed categorical cross-entropy `Σ_t -ln p_t(target_t)` of row-wise
    /// softmax over `logits` (`T x V`). Probabilities are clamped to
    /// [`PROB_FLOOR`] before the log.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var, TensorError> {
        let lv = self.value(logits);
        let (t, v) = rank2("cross_entropy", lv)?;
        if targets.len() != t {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                left: lv.shape(),
                right: Shape::matrix(targets.len(), 1),
            });
        }
        let probs = softmax_rows(lv);
        let mut loss = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            if y >= v {
                return Err(TensorError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: y,
                    extent: v,
                });
            }
            loss -= math::ln(probs[r * v + y].max(PROB_FLOOR));
        }
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Row-wise layer normalization with learned `1 x n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, TensorError> {
        let xv = self.value(x);
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let c = xv.cols();
        if gv.len() != c || bv.len() != c {
            return Err(mismatch("layer_norm", xv, gv));
        }
        let mut xhat = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(xv.rows());
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks(c) {
            let mu = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / c as f64;
            let is = 1.0 / math::sqrt(var + LAYER_NORM_EPS);
            inv_std.push(is);
            for (j, x) in row.iter().enumerate() {
                let h = (x - mu) * is;
                xhat.push(h);
                out.push(h * gv.data()[j] + bv.data()[j]);
            }
        }
        let t = Tensor {
            shape: xv.shape(),
            data: out,
        };
        Ok(self.push(
            t,
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv_std,
            },
        ))
    }

    /// Propagates d(loss)/d(node) for every node in one reverse sweep.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::NonScalarLoss(lv.shape()));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor {
            shape: lv.shape(),
            data: vec![1.0],
        });

        for i in (0..=loss.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Gradient for every parameter in `store`; parameters not reached by
    /// `loss` get zeros.
    pub fn param_gradients(&self, grads: &Gradients, store: &ParamStore) -> Vec<Tensor> {
        store
            .ids()
            .map(|id| {
                self.param_vars
                    .get(id.0)
                    .copied()
                    .flatten()
                    .and_then(|v| grads.wrt(v).cloned())
                    .unwrap_or_else(|| Tensor::zeros_like_shape(store.get(id).shape()))
            })
            .collect()
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (m, k) = (av.rows(), av.cols());
                let n = bv.cols();
                {
                    let da = self.slot(grads, *a);
                    for r in 0..m {
                        let grow = &gd[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &bv.data()[p * n..(p + 1) * n];
                            let s: f64 = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                            da[r * k + p] += s;
                        }
                    }
                }
                let db = self.slot(grads, *b);
                for r in 0..m {
                    let grow = &gd[r * n..(r + 1) * n];
                    for p in 0..k {
                        let x = av.data()[r * k + p];
                        if x == 0.0 {
                            continue;
                        }
                        for (d, gg) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                            *d += x * gg;
                        }
                    }
                }
            }
            Op::Add(a, b, mode) => {
                let c = node.value.cols();
                let (full_l, full_r) = match mode {
                    Broadcast::None => (true, true),
                    Broadcast::RowRight => (true, false),
                    Broadcast::RowLeft => (false, true),
                };
                for (idx, full) in [(*a, full_l), (*b, full_r)] {
                    let d = self.slot(grads, idx);
                    if full {
                        d.iter_mut().zip(gd).for_each(|(x, y)| *x += y);
                    } else {
                        for (k, y) in gd.iter().enumerate() {
                            d[k % c] += y;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let bv = self.nodes[*b].value.data();
                let da = self.slot(grads, *a);
                for ((d, x), y) in da.iter_mut().zip(gd).zip(bv) {
                    *d += x * y;
                }
                let av = self.nodes[*a].value.data();
                let db = self.slot(grads, *b);
                for ((d, x), y) in db.iter_mut().zip(gd).zip(av) {
                    *d += x * y;
                }
            }
            Op::Scale(a, c) => {
                let da = self.slot(grads, *a);
                da.iter_mut().zip(gd).for_each(|(d, x)| *d += c * x);
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = node.value.shape().split_at_axis(*axis);
                let mut off = 0;
                for &inp in inputs {
                    let ext = self.nodes[inp].value.shape().dims()[*axis];
                    let d = self.slot(grads, inp);
                    for o in 0..outer {
                        let src = &gd[(o * total + off) * inner..(o * total + off + ext) * inner];
                        let dst = &mut d[o * ext * inner..(o + 1) * ext * inner];
                        dst.iter_mut().zip(src).for_each(|(x, y)| *x += y);
                    }
                    off += ext;
                }
            }
            Op::Slice { input, axis, start } => {
                let (outer, ext, inner) = self.nodes[*input].value.shape().split_at_axis(*axis);
                let len = node.value.shape().dims()[*axis];
                let d = self.slot(grads, *input);
                for o in 0..outer {
                    let base = o * ext * inner + start * inner;
                    let dst = &mut d[base..base + len * inner];
                    let src = &gd[o * len * inner..(o + 1) * len * inner];
                    dst.iter_mut().zip(src).for_each(|(x, y)| *x += y);
                }
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                let d = self.slot(grads, *a);
                for ((dd, gg), yy) in d.iter_mut().zip(gd).zip(y) {
                    *dd += gg * (1.0 - yy * yy);
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let d = self.slot(grads, *a);
                for ((dd, gg), yy) in d.iter_mut().zip(gd).zip(y) {
                    *dd += gg * yy * (1.0 - yy);
                }
            }
            Op::Relu(a) => {
                let x = self.nodes[*a].value.data();
                let d = self.slot(grads, *a);
                for ((dd, gg), xx) in d.iter_mut().zip(gd).zip(x) {
                    if *xx > 0.0 {
                        *dd += gg;
                    }
                }
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let c = node.value.cols();
                let d = self.slot(grads, *a);
                for r in 0..y.len() / c {
                    let (yr, gr) = (&y[r * c..(r + 1) * c], &gd[r * c..(r + 1) * c]);
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..c {
                        d[r * c + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let y = node.value.data();
                let c = node.value.cols();
                let d = self.slot(grads, *a);
                for r in 0..y.len() / c {
                    let gr = &gd[r * c..(r + 1) * c];
                    let gsum: f64 = gr.iter().sum();
                    for j in 0..c {
                        d[r * c + j] += gr[j] - math::exp(y[r * c + j]) * gsum;
                    }
                }
            }
            Op::Embed { table, ids } => {
                let e = node.value.cols();
                let d = self.slot(grads, *table);
                for (r, &id) in ids.iter().enumerate() {
                    let dst = &mut d[id * e..(id + 1) * e];
                    dst.iter_mut()
                        .zip(&gd[r * e..(r + 1) * e])
                        .for_each(|(x, y)| *x += y);
                }
            }
            Op::Mean { input, axis } => {
                let (outer, ext, inner) = self.nodes[*input].value.shape().split_at_axis(*axis);
                let inv = 1.0 / ext as f64;
                let d = self.slot(grads, *input);
                for o in 0..outer {
                    for k in 0..ext {
                        let dst = &mut d[(o * ext + k) * inner..(o * ext + k + 1) * inner];
                        let src = &gd[o * inner..(o + 1) * inner];
                        dst.iter_mut().zip(src).for_each(|(x, y)| *x += y * inv);
                    }
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (node.value.rows(), node.value.cols());
                let d = self.slot(grads, *a);
                // node is r x c; input is c x r
                for i in 0..r {
                    for j in 0..c {
                        d[j * r + i] += gd[i * c + j];
                    }
                }
            }
            Op::Sum(a) => {
                let g0 = gd[0];
                let d = self.slot(grads, *a);
                d.iter_mut().for_each(|x| *x += g0);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let g0 = gd[0];
                let v = self.nodes[*logits].value.cols();
                let d = self.slot(grads, *logits);
                for (r, &y) in targets.iter().enumerate() {
                    let p = &probs[r * v..(r + 1) * v];
                    if p[y] < PROB_FLOOR {
                        continue;
                    }
                    for j in 0..v {
                        d[r * v + j] += g0 * p[j];
                    }
                    d[r * v + y] -= g0;
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let c = node.value.cols();
                let gam = self.nodes[*gamma].value.data();
                {
                    let dx = self.slot(grads, *x);
                    for (r, is) in inv_std.iter().enumerate() {
                        let gr = &gd[r * c..(r + 1) * c];
                        let hr = &xhat[r * c..(r + 1) * c];
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..c {
                            let dh = gr[j] * gam[j];
                            s1 += dh;
                            s2 += dh * hr[j];
                        }
                        let n = c as f64;
                        for j in 0..c {
                            let dh = gr[j] * gam[j];
                            dx[r * c + j] += is / n * (n * dh - s1 - hr[j] * s2);
                        }
                    }
                }
                {
                    let dg = self.slot(grads, *gamma);
                    for (k, (gg, h)) in gd.iter().zip(xhat).enumerate() {
                        dg[k % c] += gg * h;
                    }
                }
                let db = self.slot(grads, *beta);
                for (k, gg) in gd.iter().enumerate() {
                    db[k % c] += gg;
                }
            }
        }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Tensor>], idx: usize) -> &'g mut [f64] {
        grads[idx]
            .get_or_insert_with(|| Tensor::zeros_like_shape(self.nodes[idx].value.shape()))
            .data_mut()
    }
}

fn softmax_rows(t: &Tensor) -> Vec<f64> {
    let c = t.cols();
    let mut out = Vec::with_capacity(t.len());
    for row in t.data().chunks(c) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut z = 0.0;
        for x in row {
            let e = math::exp(x - m);
            z += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|e| *e /= z);
    }
    out
}

/// Per-node gradients from [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![0.0, 0.0, 0.0]));
        let y = tape.softmax(x);
        for p in tape.value(y).data() {
            assert!(close(*p, 1.0 / 3.0, 1e-15));
        }
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let a = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let i = tape.constant(Tensor::identity(3));
        let av = tape.constant(a.clone());
        let out = tape.matmul(i, av).unwrap();
        assert_eq!(tape.value(out), &a);
    }

    #[test]
    fn tanh_gradient_at_zero_is_one() {
        let mut tape = Tape::new();
        let w = tape.constant(Tensor::scalar(0.0));
        let y = tape.tanh(w);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(w).unwrap().item(), 1.0);
    }

    #[test]
    fn matmul_shape_mismatch_reports_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]).unwrap());
        let b = tape.constant(Tensor::zeros(&[2, 3]).unwrap());
        match tape.matmul(a, b) {
            Err(TensorError::ShapeMismatch { left, right, .. }) => {
                assert_eq!(left.dims(), &[2, 3]);
                assert_eq!(right.dims(), &[2, 3]);
            }
            other => panic!("expected mismatch, got {other:?}"),
        }
    }

    #[test]
    fn sum_of_matvec_gradient_is_outer_structure() {
        // loss = sum(x W): dW[p, j] = x[p] for every column j.
        let mut store = ParamStore::new();
        let wid = store.add("w", Tensor::matrix(3, 2, vec![0.5, -1.0, 2.0, 0.1, 0.3, 0.7]).unwrap());
        let bid = store.add("b", Tensor::row(vec![1.0, 1.0]));
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![1.0, -2.0, 3.0]));
        let w = tape.param(&store, wid);
        let _b = tape.param(&store, bid);
        let y = tape.matmul(x, w).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        let pg = tape.param_gradients(&grads, &store);
        assert_eq!(pg[0].data(), &[1.0, 1.0, -2.0, -2.0, 3.0, 3.0]);
        assert!(pg[1].data().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn cross_entropy_hand_values() {
        let mut tape = Tape::new();
        // uniform over 4 classes
        let logits = tape.constant(Tensor::matrix(1, 4, vec![0.0; 4]).unwrap());
        let l = tape.cross_entropy(logits, &[2]).unwrap();
        assert!(close(tape.value(l).item(), 4f64.ln(), 1e-12));

        // p(target) = 0.5 then 0.25: logits ln(p) reproduce the distribution
        let rows = vec![
            0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln(),
            0.25f64.ln(), 0.5f64.ln(), 0.25f64.ln(),
        ];
        let logits = tape.constant(Tensor::matrix(2, 3, rows).unwrap());
        let l = tape.cross_entropy(logits, &[0, 0]).unwrap();
        assert!(close(tape.value(l).item(), 2.0794415416798357, 1e-12));
    }

    #[test]
    fn cross_entropy_of_certain_prediction_is_zero() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::matrix(2, 3, vec![800.0, 0.0, 0.0, 0.0, 0.0, 800.0]).unwrap());
        let l = tape.cross_entropy(logits, &[0, 2]).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row(vec![1.0, 2.0]));
        let y = tape.tanh(x);
        assert!(matches!(tape.backward(y), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn mean_keeps_axis() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 6.0]).unwrap());
        let m = tape.mean(x, 0).unwrap();
        assert_eq!(tape.value(m).dims(), &[1, 2]);
        assert_eq!(tape.value(m).data(), &[2.0, 4.0]);
    }

    #[test]
    fn concat_and_slice_invert() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
        let b = tape.constant(Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let s = tape.slice(c, 1, 1, 2).unwrap();
        assert_eq!(tape.value(s), tape.value(b));
    }
}
