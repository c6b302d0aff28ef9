//! Dynamic computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! creation order, and a node's parents always precede it, so the node list
//! is already a topological order and [`Graph::backward`] is a single reverse
//! sweep.
//!
//! Gradients of leaves accumulate across `backward` calls until
//! [`Graph::zero_grads`] resets them. Intermediate gradients are scratch
//! storage and are discarded at the end of each sweep.

use crate::kernels::{self, ConvGeometry};
use crate::tensor::{Tensor, TensorError};

/// Floor applied to the argument of [`Primitive::Log`].
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The differentiable operations a node can be built from.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Scale(f64),
    MatMul,
    Transpose,
    Relu,
    Exp,
    /// Natural log of `max(x, LOG_FLOOR)`.
    Log,
    Powf(f64),
    Softmax { axis: usize },
    MeanAxis { axis: usize },
    SumAxis { axis: usize },
    Mean,
    Sum,
    Concat { axis: usize },
    Reshape(Vec<usize>),
    Slice { axis: usize, start: usize, end: usize },
    /// Input `[batch, c_in, t]`, weight `[c_out, c_in, k]`, valid padding.
    Conv1d { stride: usize },
    /// Adds a vector along `axis` of the first input.
    AddBias { axis: usize },
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Scale(_) => "scale",
            Primitive::MatMul => "matmul",
            Primitive::Transpose => "transpose",
            Primitive::Relu => "relu",
            Primitive::Exp => "exp",
            Primitive::Log => "log",
            Primitive::Powf(_) => "powf",
            Primitive::Softmax { .. } => "softmax",
            Primitive::MeanAxis { .. } => "mean_axis",
            Primitive::SumAxis { .. } => "sum_axis",
            Primitive::Mean => "mean",
            Primitive::Sum => "sum",
            Primitive::Concat { .. } => "concat",
            Primitive::Reshape(_) => "reshape",
            Primitive::Slice { .. } => "slice",
            Primitive::Conv1d { .. } => "conv1d",
            Primitive::AddBias { .. } => "add_bias",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Primitive::Add
            | Primitive::Sub
            | Primitive::Mul
            | Primitive::MatMul
            | Primitive::Conv1d { .. }
            | Primitive::AddBias { .. } => Some(2),
            Primitive::Concat { .. } => None,
            _ => Some(1),
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Option<Primitive>,
    parents: Vec<Var>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Tensor>>,
    relu_margin: Option<f64>,
}

fn mismatch(op: &'static str, lhs: &Tensor, rhs: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: lhs.shape().to_vec(),
        rhs: rhs.shape().to_vec(),
    }
}

fn invalid(op: &'static str, reason: impl Into<String>) -> TensorError {
    TensorError::InvalidArgument {
        op,
        reason: reason.into(),
    }
}

fn softmax_forward(x: &Tensor, outer: usize, len: usize, inner: usize) -> Tensor {
    let mut out = x.clone();
    let data = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let at = |a: usize| o * len * inner + a * inner + i;
            let max = (0..len).map(|a| data[at(a)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for a in 0..len {
                let e = (data[at(a)] - max).exp();
                data[at(a)] = e;
                total += e;
            }
            for a in 0..len {
                data[at(a)] /= total;
            }
        }
    }
    out
}

fn reduce_axis(x: &Tensor, outer: usize, len: usize, inner: usize, scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for a in 0..len {
            let src = &x.data()[(o * len + a) * inner..(o * len + a + 1) * inner];
            for (d, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    out.iter_mut().for_each(|v| *v *= scale);
    out
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

    fn push(&mut self, value: Tensor, op: Option<Primitive>, parents: Vec<Var>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            parents,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Adds a differentiable input (a parameter).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, None, Vec::new(), true)
    }

    /// Adds an input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, None, Vec::new(), false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn parents(&self, v: Var) -> &[Var] {
        &self.nodes[v.0].parents
    }

    pub fn primitive(&self, v: Var) -> Option<&Primitive> {
        self.nodes[v.0].op.as_ref()
    }

    /// Accumulated gradient of a leaf, `None` until a backward pass reaches it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads[v.0].as_ref()
    }

    /// Gradient of a leaf, zeros if no backward pass has reached it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor {
        self.grad(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()))
    }

    pub fn zero_grads(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    /// Smallest `|x|` seen at the input of any relu so far, `INFINITY` if none.
    pub fn relu_margin(&self) -> f64 {
        self.relu_margin.unwrap_or(f64::INFINITY)
    }

    /// Applies `prim` to `inputs`, recording the node for differentiation.
    pub fn apply(&mut self, prim: Primitive, inputs: &[Var]) -> Result<Var, TensorError> {
        let op = prim.name();
        match prim.arity() {
            Some(n) if n != inputs.len() => {
                return Err(invalid(op, format!("expected {n} inputs, got {}", inputs.len())));
            }
            None if inputs.is_empty() => return Err(invalid(op, "needs at least one input")),
            _ => {}
        }
        let value = self.forward_value(&prim, inputs)?;
        if prim == Primitive::Relu {
            let m = self.value(inputs[0]).data().iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
            self.relu_margin = Some(self.relu_margin().min(m));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, Some(prim), inputs.to_vec(), requires_grad))
    }

    fn forward_value(&self, prim: &Primitive, inputs: &[Var]) -> Result<Tensor, TensorError> {
        let op = prim.name();
        let x = self.value(inputs[0]);
        let y = inputs.get(1).map(|&v| self.value(v));
        Ok(match prim {
            Primitive::Add | Primitive::Sub | Primitive::Mul => {
                let y = y.expect("arity checked");
                if x.shape() != y.shape() {
                    return Err(mismatch(op, x, y));
                }
                match prim {
                    Primitive::Add => x.zip_map(y, |a, b| a + b)?,
                    Primitive::Sub => x.zip_map(y, |a, b| a - b)?,
                    _ => x.zip_map(y, |a, b| a * b)?,
                }
            }
            Primitive::Scale(c) => x.map(|a| a * c),
            Primitive::MatMul => {
                let y = y.expect("arity checked");
                if x.rank() != 2 || y.rank() != 2 || x.shape()[1] != y.shape()[0] {
                    return Err(mismatch(op, x, y));
                }
                x.matmul(y)?
            }
            Primitive::Transpose => {
                if x.rank() != 2 {
                    return Err(invalid(op, format!("expected a matrix, got shape {:?}", x.shape())));
                }
                x.transpose()
            }
            Primitive::Relu => x.map(|a| a.max(0.0)),
            Primitive::Exp => x.map(f64::exp),
            Primitive::Log => x.map(|a| a.max(LOG_FLOOR).ln()),
            Primitive::Powf(c) => x.map(|a| a.powf(*c)),
            Primitive::Softmax { axis } => {
                let (outer, len, inner) = x.axis_extents(op, *axis)?;
                softmax_forward(x, outer, len, inner)
            }
            Primitive::MeanAxis { axis } | Primitive::SumAxis { axis } => {
                let (outer, len, inner) = x.axis_extents(op, *axis)?;
                let scale = if matches!(prim, Primitive::MeanAxis { .. }) {
                    1.0 / len as f64
                } else {
                    1.0
                };
                let mut shape = x.shape().to_vec();
                shape.remove(*axis);
                Tensor::new(shape, reduce_axis(x, outer, len, inner, scale))?
            }
            Primitive::Mean => Tensor::scalar(x.sum() / x.numel() as f64),
            Primitive::Sum => Tensor::scalar(x.sum()),
            Primitive::Concat { axis } => {
                let first = x;
                let (outer, _, inner) = first.axis_extents(op, *axis)?;
                let mut total = 0;
                for &v in inputs {
                    let t = self.value(v);
                    let same = t.rank() == first.rank()
                        && t.shape().iter().zip(first.shape()).enumerate().all(|(k, (a, b))| k == *axis || a == b);
                    if !same {
                        return Err(mismatch(op, first, t));
                    }
                    total += t.shape()[*axis];
                }
                let mut data = Vec::with_capacity(outer * total * inner);
                for o in 0..outer {
                    for &v in inputs {
                        let t = self.value(v);
                        let chunk = t.shape()[*axis] * inner;
                        data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
                    }
                }
                let mut shape = first.shape().to_vec();
                shape[*axis] = total;
                Tensor::new(shape, data)?
            }
            Primitive::Reshape(shape) => {
                if shape.iter().product::<usize>() != x.numel() {
                    return Err(TensorError::ShapeMismatch {
                        op,
                        lhs: x.shape().to_vec(),
                        rhs: shape.clone(),
                    });
                }
                x.reshape(shape)?
            }
            Primitive::Slice { axis, start, end } => {
                let (outer, len, inner) = x.axis_extents(op, *axis)?;
                if start >= end || *end > len {
                    return Err(invalid(
                        op,
                        format!("range {start}..{end} invalid for axis {axis} of shape {:?}", x.shape()),
                    ));
                }
                let width = end - start;
                let mut data = Vec::with_capacity(outer * width * inner);
                for o in 0..outer {
                    data.extend_from_slice(&x.data()[(o * len + start) * inner..(o * len + end) * inner]);
                }
                let mut shape = x.shape().to_vec();
                shape[*axis] = width;
                Tensor::new(shape, data)?
            }
            Primitive::Conv1d { stride } => {
                let w = y.expect("arity checked");
                let geom = conv_geometry(x, w, *stride)?;
                let out = kernels::conv1d_forward(&geom, x.data(), w.data());
                Tensor::new(vec![geom.batch, geom.out_channels, geom.out_len()], out)?
            }
            Primitive::AddBias { axis } => {
                let b = y.expect("arity checked");
                let (outer, len, inner) = x.axis_extents(op, *axis)?;
                if b.shape() != [len] {
                    return Err(mismatch(op, x, b));
                }
                let mut out = x.clone();
                let data = out.data_mut();
                for o in 0..outer {
                    for (a, &bv) in b.data().iter().enumerate() {
                        for v in &mut data[(o * len + a) * inner..(o * len + a + 1) * inner] {
                            *v += bv;
                        }
                    }
                }
                out
            }
        })
    }

    /// Propagates d(root)/d(node) to every leaf reachable from `root`,
    /// adding into the leaves' accumulated gradients.
    pub fn backward(&mut self, root: Var) -> Result<(), TensorError> {
        let root_value = self.value(root);
        if root_value.numel() != 1 {
            return Err(TensorError::NonScalarRoot(root_value.shape().to_vec()));
        }
        if !self.nodes[root.0].requires_grad {
            return Ok(());
        }
        let mut scratch: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        scratch[root.0] = Some(Tensor::full(root_value.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = scratch[idx].take() else { continue };
            let node = &self.nodes[idx];
            let Some(prim) = &node.op else {
                match &mut self.leaf_grads[idx] {
                    Some(acc) => acc.axpy(1.0, &g),
                    slot => *slot = Some(g),
                }
                continue;
            };
            let contributions = self.local_gradients(idx, prim, &g);
            for (parent, pg) in contributions {
                match &mut scratch[parent.0] {
                    Some(acc) => acc.axpy(1.0, &pg),
                    slot => *slot = Some(pg),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Vector-Jacobian products of node `idx` towards its parents.
    fn local_gradients(&self, idx: usize, prim: &Primitive, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[idx];
        let p = &node.parents;
        let out = &node.value;
        let x = self.value(p[0]);
        let mut res = Vec::with_capacity(p.len());
        match prim {
            Primitive::Add => {
                for &v in p {
                    if self.wants(v) {
                        res.push((v, g.clone()));
                    }
                }
            }
            Primitive::Sub => {
                if self.wants(p[0]) {
                    res.push((p[0], g.clone()));
                }
                if self.wants(p[1]) {
                    res.push((p[1], g.map(|v| -v)));
                }
            }
            Primitive::Mul => {
                let y = self.value(p[1]);
                if self.wants(p[0]) {
                    res.push((p[0], g.zip_map(y, |a, b| a * b).expect("same shape")));
                }
                if self.wants(p[1]) {
                    res.push((p[1], g.zip_map(x, |a, b| a * b).expect("same shape")));
                }
            }
            Primitive::Scale(c) => res.push((p[0], g.map(|v| v * c))),
            Primitive::MatMul => {
                let y = self.value(p[1]);
                let (m, k) = x.dims2();
                let n = y.shape()[1];
                if self.wants(p[0]) {
                    let mut ga = vec![0.0; m * k];
                    kernels::matmul_a_bt_acc(g.data(), y.data(), &mut ga, m, n, k);
                    res.push((p[0], Tensor::new(vec![m, k], ga).expect("shape")));
                }
                if self.wants(p[1]) {
                    let mut gb = vec![0.0; k * n];
                    kernels::matmul_at_b_acc(x.data(), g.data(), &mut gb, k, m, n);
                    res.push((p[1], Tensor::new(vec![k, n], gb).expect("shape")));
                }
            }
            Primitive::Transpose => res.push((p[0], g.transpose())),
            Primitive::Relu => {
                res.push((p[0], g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }).expect("same shape")));
            }
            Primitive::Exp => res.push((p[0], g.zip_map(out, |a, b| a * b).expect("same shape"))),
            Primitive::Log => {
                let gx = g
                    .zip_map(x, |gv, xv| if xv >= LOG_FLOOR { gv / xv } else { 0.0 })
                    .expect("same shape");
                res.push((p[0], gx));
            }
            Primitive::Powf(c) => {
                let gx = g.zip_map(x, |gv, xv| gv * c * xv.powf(c - 1.0)).expect("same shape");
                res.push((p[0], gx));
            }
            Primitive::Softmax { axis } => {
                let (outer, len, inner) = out.axis_extents("softmax", *axis).expect("checked in forward");
                let mut gx = Tensor::zeros(out.shape());
                let (yd, gd) = (out.data(), g.data());
                let gxd = gx.data_mut();
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |a: usize| o * len * inner + a * inner + i;
                        let dotp: f64 = (0..len).map(|a| yd[at(a)] * gd[at(a)]).sum();
                        for a in 0..len {
                            gxd[at(a)] = yd[at(a)] * (gd[at(a)] - dotp);
                        }
                    }
                }
                res.push((p[0], gx));
            }
            Primitive::MeanAxis { axis } | Primitive::SumAxis { axis } => {
                let (outer, len, inner) = x.axis_extents("reduce", *axis).expect("checked in forward");
                let scale = if matches!(prim, Primitive::MeanAxis { .. }) {
                    1.0 / len as f64
                } else {
                    1.0
                };
                let mut gx = Tensor::zeros(x.shape());
                let gxd = gx.data_mut();
                for o in 0..outer {
                    let src = &g.data()[o * inner..(o + 1) * inner];
                    for a in 0..len {
                        for (d, &s) in gxd[(o * len + a) * inner..(o * len + a + 1) * inner].iter_mut().zip(src) {
                            *d = s * scale;
                        }
                    }
                }
                res.push((p[0], gx));
            }
            Primitive::Mean => res.push((p[0], Tensor::full(x.shape(), g.item() / x.numel() as f64))),
            Primitive::Sum => res.push((p[0], Tensor::full(x.shape(), g.item()))),
            Primitive::Concat { axis } => {
                let (outer, total, inner) = out.axis_extents("concat", *axis).expect("checked in forward");
                let mut offset = 0;
                for &v in p {
                    let t = self.value(v);
                    let width = t.shape()[*axis];
                    if self.wants(v) {
                        let mut data = Vec::with_capacity(t.numel());
                        for o in 0..outer {
                            data.extend_from_slice(
                                &g.data()[(o * total + offset) * inner..(o * total + offset + width) * inner],
                            );
                        }
                        res.push((v, Tensor::new(t.shape().to_vec(), data).expect("shape")));
                    }
                    offset += width;
                }
            }
            Primitive::Reshape(_) => res.push((p[0], g.reshape(x.shape()).expect("same numel"))),
            Primitive::Slice { axis, start, end } => {
                let (outer, len, inner) = x.axis_extents("slice", *axis).expect("checked in forward");
                let width = end - start;
                let mut gx = Tensor::zeros(x.shape());
                let gxd = gx.data_mut();
                for o in 0..outer {
                    gxd[(o * len + start) * inner..(o * len + end) * inner]
                        .copy_from_slice(&g.data()[o * width * inner..(o + 1) * width * inner]);
                }
                res.push((p[0], gx));
            }
            Primitive::Conv1d { stride } => {
                let w = self.value(p[1]);
                let geom = conv_geometry(x, w, *stride).expect("checked in forward");
                let mut gw = self.wants(p[1]).then(|| Tensor::zeros(w.shape()));
                let mut gx = self.wants(p[0]).then(|| Tensor::zeros(x.shape()));
                kernels::conv1d_backward(
                    &geom,
                    x.data(),
                    w.data(),
                    g.data(),
                    gw.as_mut().map(|t| t.data_mut()),
                    gx.as_mut().map(|t| t.data_mut()),
                );
                if let Some(gx) = gx {
                    res.push((p[0], gx));
                }
                if let Some(gw) = gw {
                    res.push((p[1], gw));
                }
            }
            Primitive::AddBias { axis } => {
                let (outer, len, inner) = x.axis_extents("add_bias", *axis).expect("checked in forward");
                if self.wants(p[0]) {
                    res.push((p[0], g.clone()));
                }
                if self.wants(p[1]) {
                    let mut gb = vec![0.0; len];
                    for o in 0..outer {
                        for (a, acc) in gb.iter_mut().enumerate() {
                            *acc += g.data()[(o * len + a) * inner..(o * len + a + 1) * inner].iter().sum::<f64>();
                        }
                    }
                    res.push((p[1], Tensor::vector(gb)));
                }
            }
        }
        res
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, TensorError> {
        self.apply(Primitive::Scale(c), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::MatMul, &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Transpose, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Relu, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Exp, &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Log, &[a])
    }

    pub fn powf(&mut self, a: Var, c: f64) -> Result<Var, TensorError> {
        self.apply(Primitive::Powf(c), &[a])
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.apply(Primitive::Softmax { axis }, &[a])
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.apply(Primitive::MeanAxis { axis }, &[a])
    }

    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var, TensorError> {
        self.apply(Primitive::SumAxis { axis }, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Mean, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TensorError> {
        self.apply(Primitive::Sum, &[a])
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        self.apply(Primitive::Concat { axis }, parts)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        self.apply(Primitive::Reshape(shape.to_vec()), &[a])
    }

    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var, TensorError> {
        self.apply(Primitive::Slice { axis, start, end }, &[a])
    }

    pub fn conv1d(&mut self, input: Var, weight: Var, stride: usize) -> Result<Var, TensorError> {
        self.apply(Primitive::Conv1d { stride }, &[input, weight])
    }

    pub fn add_bias(&mut self, a: Var, bias: Var, axis: usize) -> Result<Var, TensorError> {
        self.apply(Primitive::AddBias { axis }, &[a, bias])
    }
}

fn conv_geometry(x: &Tensor, w: &Tensor, stride: usize) -> Result<ConvGeometry, TensorError> {
    if x.rank() != 3 || w.rank() != 3 || x.shape()[1] != w.shape()[1] {
        return Err(mismatch("conv1d", x, w));
    }
    if stride == 0 {
        return Err(invalid("conv1d", "stride must be at least 1"));
    }
    let (in_len, kernel) = (x.shape()[2], w.shape()[2]);
    if kernel == 0 || in_len < kernel {
        return Err(invalid("conv1d", format!("signal length {in_len} shorter than kernel {kernel}")));
    }
    Ok(ConvGeometry {
        batch: x.shape()[0],
        in_channels: x.shape()[1],
        out_channels: w.shape()[0],
        kernel,
        stride,
        in_len,
    })
}
