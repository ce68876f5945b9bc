//! Tensor-valued computation graph with reverse-mode differentiation.
//!
//! Every vector-Jacobian product is itself expressed with graph ops, so the
//! gradients returned by [`Graph::grad`] are ordinary nodes that can be
//! differentiated again. A [`Graph::first_order`] graph records gradient
//! nodes as detached constants instead, which is cheaper when only parameter
//! gradients are needed.

use std::rc::Rc;

use crate::conv::{self, ConvGeometry};
use crate::error::{dim_err, Result, TensorError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    MaskMul(NodeId, Rc<[f64]>),
    Sqrt(NodeId),
    Recip(NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    /// `[mid] -> [outer, mid, inner]` (flattened into the recorded shape).
    Broadcast { x: NodeId, outer: usize, inner: usize },
    /// `[outer, mid, inner] -> [mid]`.
    Reduce { x: NodeId, outer: usize, mid: usize, inner: usize },
    Reshape(NodeId),
    Concat { a: NodeId, b: NodeId, axis: usize },
    Slice { x: NodeId, axis: usize, start: usize },
    Pad { x: NodeId, axis: usize, start: usize },
    Conv { x: NodeId, w: NodeId, geom: ConvGeometry },
    ConvInputAdjoint { y: NodeId, w: NodeId, geom: ConvGeometry },
    ConvKernelAdjoint { x: NodeId, y: NodeId, geom: ConvGeometry },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match *self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => vec![a, b],
            Concat { a, b, .. } => vec![a, b],
            Neg(a) | Scale(a, _) | MaskMul(a, _) | Sqrt(a) | Recip(a) | Transpose(a) | Reshape(a) => {
                vec![a]
            }
            Broadcast { x, .. } | Reduce { x, .. } | Slice { x, .. } | Pad { x, .. } => vec![x],
            Conv { x, w, .. } => vec![x, w],
            ConvInputAdjoint { y, w, .. } => vec![y, w],
            ConvKernelAdjoint { x, y, .. } => vec![x, y],
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Splits `shape` around `axis` into `(outer, len, inner)`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub struct Graph {
    nodes: Vec<Node>,
    higher_order: bool,
    detach: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    /// Graph whose gradients are themselves differentiable.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            higher_order: true,
            detach: false,
        }
    }

    /// Graph that only supports first-order gradients.
    pub fn first_order() -> Self {
        Self {
            higher_order: false,
            ..Self::new()
        }
    }

    pub fn records_higher_order(&self) -> bool {
        self.higher_order
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        let op = if self.detach { Op::Leaf } else { op };
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Adds an input tensor. Whether gradients flow to it is decided by the
    /// `wrt` list passed to [`Graph::grad`], so parameters and constants are
    /// both leaves.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return dim_err(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            ));
        }
        Ok(())
    }

    fn zip(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_parts(va.shape().to_vec(), data)
    }

    // ----- elementwise -------------------------------------------------

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        Ok(self.add_raw(a, b))
    }

    fn add_raw(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        let v = self.zip(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        Ok(self.mul_raw(a, b))
    }

    fn mul_raw(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.mul_raw(a, a)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| -x);
        self.push(Op::Neg(a), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), v)
    }

    /// Elementwise product with a constant tensor of the same length.
    pub fn mask_mul(&mut self, a: NodeId, mask: Vec<f64>) -> Result<NodeId> {
        if mask.len() != self.value(a).len() {
            return dim_err(format!(
                "mask of length {} for {:?}",
                mask.len(),
                self.shape(a)
            ));
        }
        Ok(self.mask_mul_raw(a, mask.into()))
    }

    fn mask_mul_raw(&mut self, a: NodeId, mask: Rc<[f64]>) -> NodeId {
        let va = self.value(a);
        let data = va.data().iter().zip(mask.iter()).map(|(x, m)| x * m).collect();
        let v = Tensor::from_parts(va.shape().to_vec(), data);
        self.push(Op::MaskMul(a, mask), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.leaky_relu(a, 0.0)
    }

    /// `x` for `x > 0`, `slope * x` otherwise. The mask is a constant of the
    /// graph, so second derivatives vanish away from the kink.
    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let mask: Rc<[f64]> = self
            .value(a)
            .data()
            .iter()
            .map(|&x| if x > 0.0 { 1.0 } else { slope })
            .collect();
        self.mask_mul_raw(a, mask)
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 1.0 / x);
        self.push(Op::Recip(a), v)
    }

    // ----- linear algebra ----------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return dim_err(format!("matmul {sa:?} x {sb:?}"));
        }
        Ok(self.matmul_raw(a, b))
    }

    fn matmul_raw(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
        let (ad, bd) = (va.data(), vb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = ad[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                for (o, bv) in row.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                    *o += aip * bv;
                }
            }
        }
        self.push(Op::MatMul(a, b), Tensor::from_parts(vec![m, n], out))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        if self.shape(a).len() != 2 {
            return dim_err(format!("transpose of {:?}", self.shape(a)));
        }
        Ok(self.transpose_raw(a))
    }

    fn transpose_raw(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let (r, c) = (va.shape()[0], va.shape()[1]);
        let d = va.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        self.push(Op::Transpose(a), Tensor::from_parts(vec![c, r], out))
    }

    /// `y = x W^T + b` with `W: [out, in]`, `b: [out]`, `x: [batch, in]` or `[in]`.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let sw = self.shape(w).to_vec();
        if sw.len() != 2 {
            return dim_err(format!("dense weight must be out x in, got {sw:?}"));
        }
        let (out, inp) = (sw[0], sw[1]);
        if self.shape(b) != [out] {
            return dim_err(format!("dense bias {:?} for {out} outputs", self.shape(b)));
        }
        let sx = self.shape(x).to_vec();
        let flat = sx.len() == 1;
        let x2 = match sx.as_slice() {
            [n] if *n == inp => self.reshape_raw(x, vec![1, inp]),
            [_, n] if *n == inp => x,
            _ => return dim_err(format!("dense input {sx:?} for weight {sw:?}")),
        };
        let wt = self.transpose_raw(w);
        let y = self.matmul_raw(x2, wt);
        let shape = self.shape(y).to_vec();
        let bias = self.broadcast_raw(b, shape, 1);
        let y = self.add_raw(y, bias);
        Ok(if flat { self.reshape_raw(y, vec![out]) } else { y })
    }

    // ----- broadcasting and reductions ---------------------------------

    /// Repeats the 1-D tensor `x` (of length `shape[axis]`) along every other axis.
    pub fn expand_axis(&mut self, x: NodeId, shape: &[usize], axis: usize) -> Result<NodeId> {
        if axis >= shape.len() || self.shape(x) != [shape[axis]] {
            return dim_err(format!(
                "cannot expand {:?} along axis {axis} of {shape:?}",
                self.shape(x)
            ));
        }
        Ok(self.broadcast_raw(x, shape.to_vec(), axis))
    }

    /// Repeats a single-element tensor to `shape`.
    pub fn expand(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        if self.value(x).len() != 1 {
            return dim_err(format!("expand of {:?}", self.shape(x)));
        }
        let numel: usize = shape.iter().product();
        let x = self.reshape_raw(x, vec![1]);
        let mut flat = self.broadcast_raw(x, vec![1, numel], 0);
        flat = self.reshape_raw(flat, shape.to_vec());
        Ok(flat)
    }

    fn broadcast_raw(&mut self, x: NodeId, shape: Vec<usize>, axis: usize) -> NodeId {
        let (outer, mid, inner) = split_axis(&shape, axis);
        let xd = self.value(x).data();
        debug_assert_eq!(xd.len(), mid);
        let mut out = Vec::with_capacity(outer * mid * inner);
        for _ in 0..outer {
            for &v in xd {
                out.extend(std::iter::repeat_n(v, inner));
            }
        }
        self.push(Op::Broadcast { x, outer, inner }, Tensor::from_parts(shape, out))
    }

    /// Sums over every axis except `axis`.
    pub fn sum_to_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        if axis >= self.shape(x).len() {
            return dim_err(format!("axis {axis} of {:?}", self.shape(x)));
        }
        let (outer, mid, inner) = split_axis(self.shape(x), axis);
        Ok(self.reduce_raw(x, outer, mid, inner))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).len();
        self.reduce_raw(x, 1, 1, n)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).len();
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    fn reduce_raw(&mut self, x: NodeId, outer: usize, mid: usize, inner: usize) -> NodeId {
        let xd = self.value(x).data();
        let mut out = vec![0.0; mid];
        for o in 0..outer {
            for (m, acc) in out.iter_mut().enumerate() {
                let start = (o * mid + m) * inner;
                *acc += xd[start..start + inner].iter().sum::<f64>();
            }
        }
        self.push(
            Op::Reduce {
                x,
                outer,
                mid,
                inner,
            },
            Tensor::from_parts(vec![mid], out),
        )
    }

    // ----- shape manipulation ------------------------------------------

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        if shape.iter().product::<usize>() != self.value(x).len() {
            return dim_err(format!("reshape {:?} to {shape:?}", self.shape(x)));
        }
        Ok(self.reshape_raw(x, shape.to_vec()))
    }

    fn reshape_raw(&mut self, x: NodeId, shape: Vec<usize>) -> NodeId {
        let v = Tensor::from_parts(shape, self.value(x).data().to_vec());
        self.push(Op::Reshape(x), v)
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId, axis: usize) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let compatible = sa.len() == sb.len()
            && axis < sa.len()
            && sa.iter().zip(sb).enumerate().all(|(i, (x, y))| i == axis || x == y);
        if !compatible {
            return dim_err(format!("concat {sa:?} with {sb:?} along {axis}"));
        }
        Ok(self.concat_raw(a, b, axis))
    }

    fn concat_raw(&mut self, a: NodeId, b: NodeId, axis: usize) -> NodeId {
        let (outer, la, inner) = split_axis(self.shape(a), axis);
        let lb = self.shape(b)[axis];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(outer * (la + lb) * inner);
        for o in 0..outer {
            out.extend_from_slice(&ad[o * la * inner..(o + 1) * la * inner]);
            out.extend_from_slice(&bd[o * lb * inner..(o + 1) * lb * inner]);
        }
        let mut shape = self.shape(a).to_vec();
        shape[axis] = la + lb;
        self.push(Op::Concat { a, b, axis }, Tensor::from_parts(shape, out))
    }

    pub fn slice(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let s = self.shape(x);
        if axis >= s.len() || start + len > s[axis] {
            return dim_err(format!("slice {start}..{} of axis {axis} in {s:?}", start + len));
        }
        Ok(self.slice_raw(x, axis, start, len))
    }

    fn slice_raw(&mut self, x: NodeId, axis: usize, start: usize, len: usize) -> NodeId {
        let (outer, l_in, inner) = split_axis(self.shape(x), axis);
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * l_in + start) * inner;
            out.extend_from_slice(&xd[base..base + len * inner]);
        }
        let mut shape = self.shape(x).to_vec();
        shape[axis] = len;
        self.push(Op::Slice { x, axis, start }, Tensor::from_parts(shape, out))
    }

    /// Embeds `x` into zeros of length `len_out` along `axis`, starting at `start`.
    pub fn pad(&mut self, x: NodeId, axis: usize, start: usize, len_out: usize) -> Result<NodeId> {
        let s = self.shape(x);
        if axis >= s.len() || start + s[axis] > len_out {
            return dim_err(format!("pad {s:?} into {len_out} at {start}"));
        }
        Ok(self.pad_raw(x, axis, start, len_out))
    }

    fn pad_raw(&mut self, x: NodeId, axis: usize, start: usize, len_out: usize) -> NodeId {
        let (outer, len, inner) = split_axis(self.shape(x), axis);
        let xd = self.value(x).data();
        let mut out = vec![0.0; outer * len_out * inner];
        for o in 0..outer {
            let dst = (o * len_out + start) * inner;
            out[dst..dst + len * inner].copy_from_slice(&xd[o * len * inner..(o + 1) * len * inner]);
        }
        let mut shape = self.shape(x).to_vec();
        shape[axis] = len_out;
        self.push(Op::Pad { x, axis, start }, Tensor::from_parts(shape, out))
    }

    // ----- convolutions ------------------------------------------------

    /// Strided cross-correlation of `x: [N, C_in, T]` with `w: [C_out, C_in, K]`;
    /// output `[N, C_out, ceil(T / stride)]`.
    pub fn conv1d(&mut self, x: NodeId, w: NodeId, stride: usize) -> Result<NodeId> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 3 || sw.len() != 3 || sx[1] != sw[1] || stride == 0 {
            return dim_err(format!("conv1d input {sx:?} with kernel {sw:?}"));
        }
        let geom = ConvGeometry::same_ceil(sx[2], sw[2], stride);
        Ok(self.conv_raw(x, w, geom))
    }

    /// Transpose convolution of `y: [N, C_in, T]` with `w: [C_in, C_out, K]`;
    /// output `[N, C_out, stride * T]`. Exactly the adjoint of [`Graph::conv1d`]
    /// over a sequence of length `stride * T`.
    pub fn conv_transpose1d(&mut self, y: NodeId, w: NodeId, stride: usize) -> Result<NodeId> {
        let (sy, sw) = (self.shape(y), self.shape(w));
        if sy.len() != 3 || sw.len() != 3 || sy[1] != sw[0] || stride == 0 {
            return dim_err(format!("conv_transpose1d input {sy:?} with kernel {sw:?}"));
        }
        let geom = ConvGeometry::transpose_exact(sy[2], sw[2], stride);
        Ok(self.conv_input_adjoint_raw(y, w, geom))
    }

    /// Adds a per-channel bias `b: [C]` to `x: [N, C, T]`.
    pub fn add_channel_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 {
            return dim_err(format!("channel bias on {shape:?}"));
        }
        let bb = self.expand_axis(b, &shape, 1)?;
        Ok(self.add_raw(x, bb))
    }

    fn conv_raw(&mut self, x: NodeId, w: NodeId, geom: ConvGeometry) -> NodeId {
        let (sx, sw) = (self.shape(x), self.shape(w));
        let (n, c_in, c_out) = (sx[0], sx[1], sw[0]);
        let out = conv::conv_forward(
            self.value(x).data(),
            self.value(w).data(),
            n,
            c_in,
            c_out,
            &geom,
        );
        self.push(
            Op::Conv { x, w, geom },
            Tensor::from_parts(vec![n, c_out, geom.len_out], out),
        )
    }

    fn conv_input_adjoint_raw(&mut self, y: NodeId, w: NodeId, geom: ConvGeometry) -> NodeId {
        let (sy, sw) = (self.shape(y), self.shape(w));
        let (n, c_out, c_in) = (sy[0], sy[1], sw[1]);
        let out = conv::conv_input_adjoint(
            self.value(y).data(),
            self.value(w).data(),
            n,
            c_in,
            c_out,
            &geom,
        );
        self.push(
            Op::ConvInputAdjoint { y, w, geom },
            Tensor::from_parts(vec![n, c_in, geom.len_in], out),
        )
    }

    fn conv_kernel_adjoint_raw(&mut self, x: NodeId, y: NodeId, geom: ConvGeometry) -> NodeId {
        let (sx, sy) = (self.shape(x), self.shape(y));
        let (n, c_in, c_out) = (sx[0], sx[1], sy[1]);
        let out = conv::conv_kernel_adjoint(
            self.value(x).data(),
            self.value(y).data(),
            n,
            c_in,
            c_out,
            &geom,
        );
        self.push(
            Op::ConvKernelAdjoint { x, y, geom },
            Tensor::from_parts(vec![c_out, c_in, geom.kernel], out),
        )
    }

    // ----- differentiation ---------------------------------------------

    /// Gradients of the single-element node `output` with respect to `wrt`.
    ///
    /// On a higher-order graph the returned nodes are differentiable; on a
    /// [`Graph::first_order`] graph they are detached constants.
    pub fn grad(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        let detach = !self.higher_order;
        self.backward(output, wrt, detach)
    }

    /// First-order gradient values, never recorded for further differentiation.
    pub fn gradients(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<Tensor>> {
        let ids = self.backward(output, wrt, true)?;
        Ok(ids.into_iter().map(|id| self.value(id).clone()).collect())
    }

    /// Differentiable gradient of `output` with respect to `input`.
    pub fn input_gradient(&mut self, output: NodeId, input: NodeId) -> Result<NodeId> {
        if !self.higher_order {
            return Err(TensorError::Contract(
                "input_gradient needs a graph that records higher-order terms".into(),
            ));
        }
        Ok(self.backward(output, &[input], false)?[0])
    }

    fn backward(&mut self, output: NodeId, wrt: &[NodeId], detach: bool) -> Result<Vec<NodeId>> {
        if self.value(output).len() != 1 {
            return dim_err(format!(
                "gradient of non-scalar output {:?}",
                self.shape(output)
            ));
        }
        let n = output.0 + 1;
        let mut needed = vec![false; n];
        for w in wrt {
            if w.0 < n {
                needed[w.0] = true;
            }
        }
        for i in 0..n {
            if !needed[i] {
                needed[i] = self.nodes[i].op.inputs().iter().any(|j| needed[j.0]);
            }
        }

        let saved = self.detach;
        self.detach = detach;
        let mut grads: Vec<Option<NodeId>> = vec![None; n];
        if needed[output.0] {
            let seed = Tensor::full(self.shape(output), 1.0);
            grads[output.0] = Some(self.leaf(seed));
        }
        for i in (0..n).rev() {
            let Some(g) = grads[i] else { continue };
            if !needed[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            for (input, contribution) in self.vjp(&op, NodeId(i), g, &needed) {
                grads[input.0] = Some(match grads[input.0] {
                    Some(acc) => self.add_raw(acc, contribution),
                    None => contribution,
                });
            }
        }
        self.detach = saved;

        Ok(wrt
            .iter()
            .map(|&w| match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let z = Tensor::zeros(self.shape(w));
                    self.leaf(z)
                }
            })
            .collect())
    }

    /// Contributions of upstream gradient `g` at node `id` to each needed input.
    fn vjp(&mut self, op: &Op, id: NodeId, g: NodeId, needed: &[bool]) -> Vec<(NodeId, NodeId)> {
        let need = |n: NodeId| needed[n.0];
        let mut out = Vec::with_capacity(2);
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if need(*a) {
                    out.push((*a, g));
                }
                if need(*b) {
                    out.push((*b, g));
                }
            }
            Op::Sub(a, b) => {
                if need(*a) {
                    out.push((*a, g));
                }
                if need(*b) {
                    out.push((*b, self.neg(g)));
                }
            }
            Op::Mul(a, b) => {
                if need(*a) {
                    out.push((*a, self.mul_raw(g, *b)));
                }
                if need(*b) {
                    out.push((*b, self.mul_raw(g, *a)));
                }
            }
            Op::Neg(a) => out.push((*a, self.neg(g))),
            Op::Scale(a, c) => out.push((*a, self.scale(g, *c))),
            Op::MaskMul(a, m) => out.push((*a, self.mask_mul_raw(g, m.clone()))),
            Op::Sqrt(a) => {
                // d sqrt(a) = g / (2 sqrt(a))
                let r = self.recip(id);
                let half = self.scale(r, 0.5);
                out.push((*a, self.mul_raw(g, half)));
            }
            Op::Recip(a) => {
                // d (1/a) = -g / a^2 = -g * y^2
                let y2 = self.mul_raw(id, id);
                let t = self.mul_raw(g, y2);
                out.push((*a, self.neg(t)));
            }
            Op::MatMul(a, b) => {
                if need(*a) {
                    let bt = self.transpose_raw(*b);
                    out.push((*a, self.matmul_raw(g, bt)));
                }
                if need(*b) {
                    let at = self.transpose_raw(*a);
                    out.push((*b, self.matmul_raw(at, g)));
                }
            }
            Op::Transpose(a) => out.push((*a, self.transpose_raw(g))),
            Op::Broadcast { x, outer, inner } => {
                let mid = self.value(*x).len();
                out.push((*x, self.reduce_raw(g, *outer, mid, *inner)));
            }
            Op::Reduce {
                x,
                outer,
                mid,
                inner,
            } => {
                let b = self.broadcast_raw(g, vec![*outer, *mid, *inner], 1);
                let shape = self.shape(*x).to_vec();
                out.push((*x, self.reshape_raw(b, shape)));
            }
            Op::Reshape(x) => {
                let shape = self.shape(*x).to_vec();
                out.push((*x, self.reshape_raw(g, shape)));
            }
            Op::Concat { a, b, axis } => {
                let la = self.shape(*a)[*axis];
                let lb = self.shape(*b)[*axis];
                if need(*a) {
                    out.push((*a, self.slice_raw(g, *axis, 0, la)));
                }
                if need(*b) {
                    out.push((*b, self.slice_raw(g, *axis, la, lb)));
                }
            }
            Op::Slice { x, axis, start } => {
                let len_in = self.shape(*x)[*axis];
                out.push((*x, self.pad_raw(g, *axis, *start, len_in)));
            }
            Op::Pad { x, axis, start } => {
                let len = self.shape(*x)[*axis];
                out.push((*x, self.slice_raw(g, *axis, *start, len)));
            }
            Op::Conv { x, w, geom } => {
                if need(*x) {
                    out.push((*x, self.conv_input_adjoint_raw(g, *w, *geom)));
                }
                if need(*w) {
                    out.push((*w, self.conv_kernel_adjoint_raw(*x, g, *geom)));
                }
            }
            Op::ConvInputAdjoint { y, w, geom } => {
                if need(*y) {
                    out.push((*y, self.conv_raw(g, *w, *geom)));
                }
                if need(*w) {
                    out.push((*w, self.conv_kernel_adjoint_raw(g, *y, *geom)));
                }
            }
            Op::ConvKernelAdjoint { x, y, geom } => {
                if need(*x) {
                    out.push((*x, self.conv_input_adjoint_raw(*y, g, *geom)));
                }
                if need(*y) {
                    out.push((*y, self.conv_raw(*x, g, *geom)));
                }
            }
        }
        out
    }
}
