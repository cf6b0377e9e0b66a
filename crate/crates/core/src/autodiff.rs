//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation applied to [`Var`] handles in
//! execution order, which is a topological order by construction.
//! [`Tape::backward`] replays the record once in reverse and returns the
//! gradients of every leaf that requires them. A tape can be replayed only
//! once; recording on a consumed tape is an error.

use std::cell::{Cell, Ref, RefCell};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{broadcast_index_map, broadcast_shape, gemm, strides, Tensor};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary(BinaryKind, usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul {
        a: usize,
        b: usize,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        b_shared: bool,
    },
    Permute(usize, Vec<usize>),
    Reshape(usize),
    Softmax(usize, usize),
    LayerNorm {
        a: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        floored: Vec<bool>,
    },
    Gelu(usize),
    Tanh(usize),
    Abs(usize),
    Sum(usize),
    Concat(Vec<usize>),
    SliceRows(usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient of `var`, or zeros of `shape` when nothing flowed into it.
    pub fn get_or_zeros(&self, var: Var<'_>, shape: &[usize]) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed.get()
    }

    /// Records a leaf. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        assert!(!self.consumed.get(), "recording on a consumed tape");
        self.push_node(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    fn push_node(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
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

    fn push(&self, value: Tensor, op: Op, inputs: &[usize]) -> Result<Var<'_>> {
        if self.consumed.get() {
            return Err(Error::TapeConsumed);
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|&i| nodes[i].requires_grad)
        };
        Ok(self.push_node(value, op, requires_grad))
    }

    fn check_live(&self) -> Result<()> {
        if self.consumed.get() {
            Err(Error::TapeConsumed)
        } else {
            Ok(())
        }
    }

    fn value_ref(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Concatenates along the leading axis.
    pub fn concat_rows<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        self.check_live()?;
        let ids: Vec<usize> = parts.iter().map(|v| v.id).collect();
        let out = {
            let nodes = self.nodes.borrow();
            let refs: Vec<&Tensor> = ids.iter().map(|&i| &nodes[i].value).collect();
            Tensor::concat_rows(&refs)?
        };
        self.push(out, Op::Concat(ids.clone()), &ids)
    }

    /// Replays the tape in reverse from the scalar `loss` and returns leaf
    /// gradients. The recorded operations are discarded afterwards; a second
    /// call fails with [`Error::TapeConsumed`].
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        self.check_live()?;
        let mut nodes = self.nodes.borrow_mut();
        if nodes.is_empty() {
            return Err(Error::InvalidArgument("backward on an empty tape".into()));
        }
        let loss_shape = nodes[loss.id].value.shape().to_vec();
        if nodes[loss.id].value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_shape));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                grads[id] = Some(g);
                continue;
            }
            backprop_node(&nodes, id, &g, &mut grads);
        }

        let out = nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (&node.op, g) {
                (Op::Leaf, Some(g)) if node.requires_grad => {
                    Some(Tensor::from_parts(node.value.shape().to_vec(), g))
                }
                _ => None,
            })
            .collect();
        for node in nodes.iter_mut() {
            node.op = Op::Leaf;
        }
        self.consumed.set(true);
        Ok(Gradients { grads: out })
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, contrib: Vec<f64>) {
    match slot {
        Some(acc) => {
            for (a, c) in acc.iter_mut().zip(contrib) {
                *a += c;
            }
        }
        None => *slot = Some(contrib),
    }
}

/// Source index lookup for one operand of a broadcast op.
enum Broadcast {
    Same,
    /// Operand shape is a trailing suffix of the output: index modulo its size.
    Suffix(usize),
    Map(Vec<usize>),
}

impl Broadcast {
    fn new(src: &[usize], out: &[usize]) -> Self {
        if src == out {
            Broadcast::Same
        } else if out.ends_with(src) {
            Broadcast::Suffix(src.iter().product())
        } else {
            Broadcast::Map(broadcast_index_map(src, out))
        }
    }

    #[inline]
    fn at(&self, i: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::Suffix(n) => i % n,
            Broadcast::Map(m) => m[i],
        }
    }
}

/// Sums a gradient of shape `out_shape` down to the broadcast source `src`.
fn reduce_to(g: &[f64], out_shape: &[usize], src: &[usize]) -> Vec<f64> {
    if src == out_shape {
        return g.to_vec();
    }
    let src_numel: usize = src.iter().product();
    let mut acc = vec![0.0; src_numel];
    if out_shape.ends_with(src) {
        for (i, v) in g.iter().enumerate() {
            acc[i % src_numel] += v;
        }
    } else {
        let map = broadcast_index_map(src, out_shape);
        for (i, v) in g.iter().enumerate() {
            acc[map[i]] += v;
        }
    }
    acc
}

fn backprop_node(nodes: &[Node], id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[id];
    let out_shape = node.value.shape();
    let needs = |i: usize| nodes[i].requires_grad;
    match &node.op {
        Op::Leaf => {}
        Op::Binary(kind, a, b) => {
            let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
            let ma = Broadcast::new(va.shape(), out_shape);
            let mb = Broadcast::new(vb.shape(), out_shape);
            let (da, db) = (va.data(), vb.data());
            if needs(*a) {
                let full: Vec<f64> = match kind {
                    BinaryKind::Add | BinaryKind::Sub => g.to_vec(),
                    BinaryKind::Mul => g.iter().enumerate().map(|(i, g)| g * db[mb.at(i)]).collect(),
                    BinaryKind::Div => g.iter().enumerate().map(|(i, g)| g / db[mb.at(i)]).collect(),
                };
                accumulate(&mut grads[*a], reduce_to(&full, out_shape, va.shape()));
            }
            if needs(*b) {
                let full: Vec<f64> = match kind {
                    BinaryKind::Add => g.to_vec(),
                    BinaryKind::Sub => g.iter().map(|g| -g).collect(),
                    BinaryKind::Mul => g.iter().enumerate().map(|(i, g)| g * da[ma.at(i)]).collect(),
                    BinaryKind::Div => g
                        .iter()
                        .enumerate()
                        .map(|(i, g)| {
                            let y = db[mb.at(i)];
                            -g * da[ma.at(i)] / (y * y)
                        })
                        .collect(),
                };
                accumulate(&mut grads[*b], reduce_to(&full, out_shape, vb.shape()));
            }
        }
        Op::Scale(a, c) => {
            accumulate(&mut grads[*a], g.iter().map(|v| v * c).collect());
        }
        Op::AddScalar(a) | Op::Reshape(a) => {
            accumulate(&mut grads[*a], g.to_vec());
        }
        Op::MatMul {
            a,
            b,
            batch,
            m,
            k,
            n,
            b_shared,
        } => {
            let (m, k, n) = (*m, *k, *n);
            let (va, vb) = (nodes[*a].value.data(), nodes[*b].value.data());
            if needs(*a) {
                let mut ga = vec![0.0; batch * m * k];
                for bi in 0..*batch {
                    let boff = if *b_shared { 0 } else { bi * k * n };
                    gemm(
                        m,
                        n,
                        k,
                        &g[bi * m * n..],
                        false,
                        &vb[boff..],
                        true,
                        &mut ga[bi * m * k..],
                        false,
                    );
                }
                accumulate(&mut grads[*a], ga);
            }
            if needs(*b) {
                let mut gb = vec![0.0; if *b_shared { k * n } else { batch * k * n }];
                for bi in 0..*batch {
                    let boff = if *b_shared { 0 } else { bi * k * n };
                    gemm(
                        k,
                        m,
                        n,
                        &va[bi * m * k..],
                        true,
                        &g[bi * m * n..],
                        false,
                        &mut gb[boff..],
                        *b_shared,
                    );
                }
                accumulate(&mut grads[*b], gb);
            }
        }
        Op::Permute(a, axes) => {
            let mut inverse = vec![0; axes.len()];
            for (i, &ax) in axes.iter().enumerate() {
                inverse[ax] = i;
            }
            let gt = permute_data(g, out_shape, &inverse);
            accumulate(&mut grads[*a], gt);
        }
        Op::Softmax(a, axis) => {
            let y = node.value.data();
            let (outer, len, inner) = axis_split(out_shape, *axis);
            let mut gx = vec![0.0; y.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    let dot: f64 = (0..len)
                        .map(|l| g[base + l * inner] * y[base + l * inner])
                        .sum();
                    for l in 0..len {
                        let idx = base + l * inner;
                        gx[idx] = y[idx] * (g[idx] - dot);
                    }
                }
            }
            accumulate(&mut grads[*a], gx);
        }
        Op::LayerNorm {
            a,
            gain,
            bias,
            xhat,
            inv_std,
            floored,
        } => {
            let d = *out_shape.last().unwrap();
            let rows = xhat.len() / d;
            let gv = nodes[*gain].value.data();
            if needs(*a) {
                let mut gx = vec![0.0; xhat.len()];
                for r in 0..rows {
                    let row = r * d..(r + 1) * d;
                    let dxhat: Vec<f64> = g[row.clone()]
                        .iter()
                        .zip(gv)
                        .map(|(g, w)| g * w)
                        .collect();
                    let mean_d = dxhat.iter().sum::<f64>() / d as f64;
                    let xh = &xhat[row.clone()];
                    let mean_dx = if floored[r] {
                        0.0
                    } else {
                        dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64
                    };
                    for j in 0..d {
                        gx[r * d + j] = inv_std[r] * (dxhat[j] - mean_d - xh[j] * mean_dx);
                    }
                }
                accumulate(&mut grads[*a], gx);
            }
            if needs(*gain) {
                let mut gg = vec![0.0; d];
                for r in 0..rows {
                    for j in 0..d {
                        gg[j] += g[r * d + j] * xhat[r * d + j];
                    }
                }
                accumulate(&mut grads[*gain], gg);
            }
            if needs(*bias) {
                let mut gb = vec![0.0; d];
                for r in 0..rows {
                    for j in 0..d {
                        gb[j] += g[r * d + j];
                    }
                }
                accumulate(&mut grads[*bias], gb);
            }
        }
        Op::Gelu(a) => {
            let x = nodes[*a].value.data();
            let gx = g.iter().zip(x).map(|(g, &x)| g * gelu_grad(x)).collect();
            accumulate(&mut grads[*a], gx);
        }
        Op::Tanh(a) => {
            let y = node.value.data();
            let gx = g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
            accumulate(&mut grads[*a], gx);
        }
        Op::Abs(a) => {
            let x = nodes[*a].value.data();
            let gx = g
                .iter()
                .zip(x)
                .map(|(g, &x)| {
                    if x > 0.0 {
                        *g
                    } else if x < 0.0 {
                        -g
                    } else {
                        0.0
                    }
                })
                .collect();
            accumulate(&mut grads[*a], gx);
        }
        Op::Sum(a) => {
            let n = nodes[*a].value.numel();
            accumulate(&mut grads[*a], vec![g[0]; n]);
        }
        Op::Concat(parts) => {
            let mut offset = 0;
            for &p in parts {
                let len = nodes[p].value.numel();
                if needs(p) {
                    accumulate(&mut grads[p], g[offset..offset + len].to_vec());
                }
                offset += len;
            }
        }
        Op::SliceRows(a, start) => {
            let src = &nodes[*a].value;
            let stride: usize = src.shape()[1..].iter().product();
            let mut ga = vec![0.0; src.numel()];
            ga[start * stride..start * stride + g.len()].copy_from_slice(g);
            accumulate(&mut grads[*a], ga);
        }
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Data of `src` (shape `shape`) permuted so that output axis `i` is input
/// axis `axes[i]`.
fn permute_data(src: &[f64], shape: &[usize], axes: &[usize]) -> Vec<f64> {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let eff: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = out_shape.len();
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0usize; n];
    let mut flat = 0usize;
    for _ in 0..src.len() {
        out.push(src[flat]);
        for d in (0..n).rev() {
            idx[d] += 1;
            flat += eff[d];
            if idx[d] < out_shape[d] {
                break;
            }
            flat -= eff[d] * idx[d];
            idx[d] = 0;
        }
    }
    out
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = SQRT_2_OVER_PI * (x + GELU_C * x * x * x);
    let th = u.tanh();
    let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

/// Elementwise binary op under trailing broadcasting, without recording.
pub fn binary_values(a: &Tensor, b: &Tensor, kind: BinaryKind) -> Result<Tensor> {
    let shape = broadcast_shape(a.shape(), b.shape())
        .ok_or_else(|| Error::shape("binary_op", a.shape(), b.shape()))?;
    if kind == BinaryKind::Div && b.data().iter().any(|&v| v == 0.0) {
        return Err(Error::DivisionByZero);
    }
    let f = |x: f64, y: f64| match kind {
        BinaryKind::Add => x + y,
        BinaryKind::Sub => x - y,
        BinaryKind::Mul => x * y,
        BinaryKind::Div => x / y,
    };
    let (da, db) = (a.data(), b.data());
    let data: Vec<f64> = if a.shape() == b.shape() {
        da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect()
    } else if a.shape() == shape.as_slice() && shape.ends_with(b.shape()) {
        let bn = db.len();
        da.iter().enumerate().map(|(i, &x)| f(x, db[i % bn])).collect()
    } else {
        let ma = broadcast_index_map(a.shape(), &shape);
        let mb = broadcast_index_map(b.shape(), &shape);
        ma.iter().zip(&mb).map(|(&i, &j)| f(da[i], db[j])).collect()
    };
    Ok(Tensor::from_parts(shape, data))
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_ref(self.id).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value_ref(self.id).shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    fn unary(&self, op: Op, f: impl FnOnce(&Tensor) -> Result<Tensor>) -> Result<Var<'t>> {
        self.tape.check_live()?;
        let out = f(&self.tape.value_ref(self.id))?;
        self.tape.push(out, op, &[self.id])
    }

    pub fn binary(&self, other: Var<'t>, kind: BinaryKind) -> Result<Var<'t>> {
        self.tape.check_live()?;
        let out = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(other.id);
            binary_values(&a, &b, kind)?
        };
        self.tape
            .push(out, Op::Binary(kind, self.id, other.id), &[self.id, other.id])
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Add)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Sub)
    }

    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Mul)
    }

    pub fn div(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Div)
    }

    pub fn scale(&self, c: f64) -> Result<Var<'t>> {
        self.unary(Op::Scale(self.id, c), |t| Ok(t.scale(c)))
    }

    pub fn add_scalar(&self, c: f64) -> Result<Var<'t>> {
        self.unary(Op::AddScalar(self.id), |t| Ok(t.map(|v| v + c)))
    }

    /// Matrix product over the last two axes. `self` may carry leading batch
    /// axes; `other` either has the same leading axes or is a shared 2-D
    /// matrix.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.tape.check_live()?;
        let (out, op) = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(other.id);
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() < 2 || sb.len() < 2 {
                return Err(Error::shape("matmul", sa, sb));
            }
            let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
            let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
            let lead_a = &sa[..sa.len() - 2];
            let lead_b = &sb[..sb.len() - 2];
            let b_shared = lead_b.is_empty();
            if k != kb || (!b_shared && lead_a != lead_b) {
                return Err(Error::shape("matmul", sa, sb));
            }
            let batch: usize = lead_a.iter().product();
            let mut data = vec![0.0; batch * m * n];
            for bi in 0..batch {
                let boff = if b_shared { 0 } else { bi * k * n };
                gemm(
                    m,
                    k,
                    n,
                    &a.data()[bi * m * k..],
                    false,
                    &b.data()[boff..],
                    false,
                    &mut data[bi * m * n..],
                    false,
                );
            }
            let mut shape = lead_a.to_vec();
            shape.extend([m, n]);
            (
                Tensor::from_parts(shape, data),
                Op::MatMul {
                    a: self.id,
                    b: other.id,
                    batch,
                    m,
                    k,
                    n,
                    b_shared,
                },
            )
        };
        self.tape.push(out, op, &[self.id, other.id])
    }

    pub fn permute(&self, axes: &[usize]) -> Result<Var<'t>> {
        let mut seen = axes.to_vec();
        seen.sort_unstable();
        let shape = self.shape();
        if seen != (0..shape.len()).collect::<Vec<_>>() {
            return Err(Error::InvalidArgument(format!(
                "permutation {axes:?} invalid for rank {}",
                shape.len()
            )));
        }
        self.unary(Op::Permute(self.id, axes.to_vec()), |t| {
            let out_shape = axes.iter().map(|&a| t.shape()[a]).collect();
            Ok(Tensor::from_parts(
                out_shape,
                permute_data(t.data(), t.shape(), axes),
            ))
        })
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Var<'t>> {
        let r = self.shape().len();
        if r < 2 {
            return Err(Error::InvalidArgument("transpose needs rank >= 2".into()));
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(&axes)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        self.unary(Op::Reshape(self.id), |t| t.reshape(shape))
    }

    pub fn softmax(&self, axis: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(Error::InvalidArgument(format!(
                "softmax axis {axis} out of range for rank {}",
                shape.len()
            )));
        }
        self.unary(Op::Softmax(self.id, axis), |t| {
            let (outer, len, inner) = axis_split(t.shape(), axis);
            let x = t.data();
            let mut y = vec![0.0; x.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    let max = (0..len)
                        .map(|l| x[base + l * inner])
                        .fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for l in 0..len {
                        let e = (x[base + l * inner] - max).exp();
                        y[base + l * inner] = e;
                        z += e;
                    }
                    for l in 0..len {
                        y[base + l * inner] /= z;
                    }
                }
            }
            Ok(Tensor::from_parts(t.shape().to_vec(), y))
        })
    }

    /// Normalizes over the last axis, then applies `gain` and `bias`.
    /// The variance is floored at `eps`, so a constant row maps to `bias`.
    pub fn layer_norm(&self, gain: Var<'t>, bias: Var<'t>, eps: f64) -> Result<Var<'t>> {
        self.tape.check_live()?;
        if eps <= 0.0 {
            return Err(Error::InvalidArgument("layer_norm eps must be > 0".into()));
        }
        let (out, op) = {
            let x = self.tape.value_ref(self.id);
            let gv = self.tape.value_ref(gain.id);
            let bv = self.tape.value_ref(bias.id);
            let d = *x.shape().last().unwrap();
            if gv.shape() != [d] || bv.shape() != [d] {
                return Err(Error::shape("layer_norm", x.shape(), gv.shape()));
            }
            let rows = x.numel() / d;
            let mut xhat = vec![0.0; x.numel()];
            let mut inv_std = vec![0.0; rows];
            let mut floored = vec![false; rows];
            let mut y = vec![0.0; x.numel()];
            for r in 0..rows {
                let row = &x.data()[r * d..(r + 1) * d];
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                floored[r] = var < eps;
                let s = 1.0 / var.max(eps).sqrt();
                inv_std[r] = s;
                for j in 0..d {
                    let xh = (row[j] - mean) * s;
                    xhat[r * d + j] = xh;
                    y[r * d + j] = xh * gv.data()[j] + bv.data()[j];
                }
            }
            (
                Tensor::from_parts(x.shape().to_vec(), y),
                Op::LayerNorm {
                    a: self.id,
                    gain: gain.id,
                    bias: bias.id,
                    xhat,
                    inv_std,
                    floored,
                },
            )
        };
        self.tape.push(out, op, &[self.id, gain.id, bias.id])
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&self) -> Result<Var<'t>> {
        self.unary(Op::Gelu(self.id), |t| Ok(t.map(gelu)))
    }

    pub fn tanh(&self) -> Result<Var<'t>> {
        self.unary(Op::Tanh(self.id), |t| Ok(t.map(f64::tanh)))
    }

    pub fn abs(&self) -> Result<Var<'t>> {
        self.unary(Op::Abs(self.id), |t| Ok(t.map(f64::abs)))
    }

    pub fn sum(&self) -> Result<Var<'t>> {
        self.unary(Op::Sum(self.id), |t| Ok(Tensor::scalar(t.sum())))
    }

    pub fn mean(&self) -> Result<Var<'t>> {
        let n = self.tape.value_ref(self.id).numel() as f64;
        self.sum()?.scale(1.0 / n)
    }

    /// Rows `start..end` of the leading axis.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Var<'t>> {
        self.unary(Op::SliceRows(self.id, start), |t| t.slice_rows(start, end))
    }

    /// Inverted dropout: zeroes entries with probability `p` and rescales the
    /// survivors by `1/(1-p)`. The mask is a constant leaf.
    pub fn dropout<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout p={p} not in [0,1)")));
        }
        if p == 0.0 {
            return Ok(*self);
        }
        let shape = self.shape();
        let keep = 1.0 / (1.0 - p);
        let mut mask = Tensor::zeros(&shape);
        for m in mask.data_mut() {
            if rng.gen::<f64>() >= p {
                *m = keep;
            }
        }
        let mask = self.tape.constant(mask);
        self.mul(mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn add_elementwise() {
        let tape = Tape::new();
        let a = tape.constant(t(&[2], &[1., 2.]));
        let b = tape.constant(t(&[2], &[3., 4.]));
        assert_eq!(a.add(b).unwrap().value().data(), &[4., 6.]);
    }

    #[test]
    fn mul_by_ones_is_identity() {
        let tape = Tape::new();
        let x = t(&[2, 3], &[1., -2., 3., 0.5, 7., -1.]);
        let a = tape.constant(x.clone());
        let ones = tape.constant(Tensor::ones(&[2, 3]));
        assert_eq!(a.mul(ones).unwrap().value(), x);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::ones(&[2, 3]));
        let b = tape.constant(Tensor::ones(&[2]));
        let err = a.add(b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("[2]"), "{err}");
    }

    #[test]
    fn div_by_zero_rejected() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::ones(&[2]));
        let b = tape.constant(t(&[2], &[1., 0.]));
        assert!(matches!(a.div(b), Err(Error::DivisionByZero)));
    }

    #[test]
    fn matmul_hand_cases() {
        let tape = Tape::new();
        let m = t(&[3, 2], &[1., 2., 3., 4., 5., 6.]);
        let i3 = tape.constant(Tensor::eye(3));
        let mv = tape.constant(m.clone());
        assert_eq!(i3.matmul(mv).unwrap().value(), m);

        let a = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = tape.constant(t(&[2, 1], &[1., 1.]));
        assert_eq!(a.matmul(b).unwrap().value().data(), &[3., 7.]);
        assert!(a.matmul(mv).is_err());
    }

    #[test]
    fn softmax_cases() {
        let tape = Tape::new();
        let s = tape.constant(Tensor::zeros(&[3])).softmax(0).unwrap().value();
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = tape
            .constant(t(&[2], &[1000., 0.]))
            .softmax(0)
            .unwrap()
            .value();
        assert!(s.is_finite());
        assert!((s.data()[0] - 1.0).abs() < 1e-12 && s.data()[1].abs() < 1e-12);
    }

    #[test]
    fn layer_norm_cases() {
        let tape = Tape::new();
        let gain = tape.constant(Tensor::ones(&[2]));
        let bias = tape.constant(Tensor::zeros(&[2]));
        let y = tape
            .constant(t(&[2], &[1., -1.]))
            .layer_norm(gain, bias, 1e-5)
            .unwrap()
            .value();
        assert!((y.data()[0] - 1.0).abs() < 1e-12 && (y.data()[1] + 1.0).abs() < 1e-12);

        let gain = tape.constant(Tensor::ones(&[4]));
        let bias = tape.constant(Tensor::zeros(&[4]));
        let y = tape
            .constant(Tensor::full(&[4], 3.25))
            .layer_norm(gain, bias, 1e-5)
            .unwrap()
            .value();
        assert_eq!(y.data(), &[0.0; 4]);
    }

    #[test]
    fn backward_simple_losses() {
        let tape = Tape::new();
        let x = tape.param(t(&[3], &[1., -2., 0.5]));
        let g = tape.backward(x.sum().unwrap()).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1., 1., 1.]);

        let tape = Tape::new();
        let x = tape.param(t(&[3], &[1., -2., 0.5]));
        let loss = x.mul(x).unwrap().sum().unwrap().scale(0.5).unwrap();
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1., -2., 0.5]);
    }

    #[test]
    fn backward_twice_is_error() {
        let tape = Tape::new();
        let x = tape.param(Tensor::ones(&[2]));
        let loss = x.sum().unwrap();
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(Error::TapeConsumed)));
        assert!(matches!(x.scale(2.0), Err(Error::TapeConsumed)));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::new();
        let x = tape.param(Tensor::ones(&[2]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn dropout_is_inverted() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let tape = Tape::new();
        let x = tape.constant(Tensor::ones(&[10_000]));
        let y = x.dropout(0.5, &mut rng).unwrap().value();
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let mean = y.sum() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.05);
    }

    #[test]
    fn permute_roundtrip() {
        let tape = Tape::new();
        let x = Tensor::new(&[2, 3, 4], (0..24).map(f64::from).collect()).unwrap();
        let v = tape.constant(x.clone());
        let p = v.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), vec![4, 2, 3]);
        // element (i,j,k) of x lands at (k,i,j)
        assert_eq!(p.value().data()[3 * 6 + 1 * 3 + 2], x.data()[1 * 12 + 2 * 4 + 3]);
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back.value(), x);
    }
}
