//! Tape-based reverse-mode automatic differentiation.
//!
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order; [`Graph::backward`] walks it once in reverse.

use std::borrow::Cow;

use super::kernels::{self, ConvGeom};
use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Add(Var, Var),
    Mul(Var, Var),
    AddRowBias { x: Var, bias: Var, cols: usize },
    Scale(Var, T),
    Transpose { x: Var, rows: usize, cols: usize },
    Reshape(Var),
    SliceCols { x: Var, cols: usize, start: usize, len: usize },
    ConcatCols { parts: Vec<(Var, usize)>, rows: usize },
    ConcatLeading(Vec<Var>),
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    Softmax { x: Var, outer: usize, len: usize, inner: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, rows: usize, cols: usize, means: Vec<T>, rstds: Vec<T> },
    Gelu(Var),
    Dropout { x: Var, mask: Vec<T> },
    Upsample { x: Var, c: usize, h: usize, w: usize, out_h: usize, out_w: usize },
    Sum(Var),
    Mean(Var),
    CrossEntropy { logits: Var, probs: Vec<T>, targets: Vec<usize>, batch: usize, classes: usize, pixels: usize },
}

struct Node<'a, T: Real> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// A computation graph recording every operation applied to its nodes.
///
/// Leaves may borrow their tensors (`param`, `input`) so model parameters are
/// never copied into a graph.
pub struct Graph<'a, T: Real = f32> {
    nodes: Vec<Node<'a, T>>,
    grads: Vec<Option<Vec<T>>>,
    corrupt_gelu_backward: bool,
}

impl<'a, T: Real> Default for Graph<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Real> Graph<'a, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            corrupt_gelu_backward: false,
        }
    }

    /// Test hook: perturbs the GELU backward rule so verification tooling can
    /// demonstrate that it detects a wrong gradient.
    #[doc(hidden)]
    pub fn inject_gelu_backward_fault(&mut self) {
        self.corrupt_gelu_backward = true;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Cow::Owned(value), op, rg)
    }

    /// Owned leaf that does not receive a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    /// Owned leaf that receives a gradient.
    pub fn variable(&mut self, t: Tensor<T>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    /// Borrowed leaf that receives a gradient.
    pub fn param(&mut self, t: &'a Tensor<T>) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, true)
    }

    /// Borrowed leaf that does not receive a gradient.
    pub fn input(&mut self, t: &'a Tensor<T>) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn grad_tensor(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.grad(v)?;
        Tensor::new(self.shape(v).to_vec(), g.to_vec()).ok()
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::Dimension(format!("{what} expects a matrix, got shape {s:?}"))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, n) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner extents differ: {:?} · {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out = kernels::matmul(self.data(a), self.data(b), m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.derived(t, Op::MatMul { a, b, m, k, n }, &[a, b]))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x + y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.derived(t, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.data(a).iter().zip(self.data(b)).map(|(&x, &y)| x * y).collect();
        let t = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.derived(t, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a vector to every row of `x` (last axis).
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let cols = *self.shape(x).last().unwrap_or(&1);
        if self.shape(bias) != [cols] {
            return Err(Error::Dimension(format!(
                "row bias {:?} does not match last extent of {:?}",
                self.shape(bias),
                self.shape(x)
            )));
        }
        let b = self.data(bias);
        let data = self
            .data(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b[i % cols])
            .collect();
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.derived(t, Op::AddRowBias { x, bias, cols }, &[x, bias]))
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        let data = self.data(x).iter().map(|&v| v * s).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).expect("same shape");
        self.derived(t, Op::Scale(x, s), &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.matrix_dims(x, "transpose")?;
        let t = Tensor::new(vec![cols, rows], kernels::transpose(self.data(x), rows, cols))?;
        Ok(self.derived(t, Op::Transpose { x, rows, cols }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.derived(t, Op::Reshape(x), &[x]))
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.matrix_dims(x, "slice_cols")?;
        if start + len > cols {
            return Err(Error::Dimension(format!(
                "slice_cols {start}..{} exceeds {cols} columns",
                start + len
            )));
        }
        let src = self.data(x);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let t = Tensor::new(vec![rows, len], data)?;
        Ok(self.derived(t, Op::SliceCols { x, cols, start, len }, &[x]))
    }

    /// Concatenate matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.matrix_dims(parts[0], "concat_cols")?.0;
        let mut dims = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix_dims(p, "concat_cols")?;
            if r != rows {
                return Err(Error::Dimension(format!(
                    "concat_cols row counts differ: {r} vs {rows}"
                )));
            }
            dims.push((p, c));
        }
        let total: usize = dims.iter().map(|d| d.1).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &(p, c) in &dims {
                data.extend_from_slice(&self.data(p)[r * c..(r + 1) * c]);
            }
        }
        let t = Tensor::new(vec![rows, total], data)?;
        Ok(self.derived(t, Op::ConcatCols { parts: dims, rows }, parts))
    }

    /// Concatenate along the leading axis (channels of `C×H×W` maps).
    pub fn concat_leading(&mut self, parts: &[Var]) -> Result<Var> {
        let rest = self.shape(parts[0])[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.len() != rest.len() + 1 || s[1..] != rest[..] {
                return Err(Error::Dimension(format!(
                    "concat_leading: shape {s:?} incompatible with trailing {rest:?}"
                )));
            }
            lead += s[0];
            data.extend_from_slice(self.data(p));
        }
        let mut shape = vec![lead];
        shape.extend(rest);
        let t = Tensor::new(shape, data)?;
        Ok(self.derived(t, Op::ConcatLeading(parts.to_vec()), parts))
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
        groups: usize,
    ) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(x), self.shape(w), stride, padding, groups)?;
        if let Some(b) = b {
            if self.shape(b) != [geom.c_out] {
                return Err(Error::Dimension(format!(
                    "conv2d bias {:?} does not match {} output channels",
                    self.shape(b),
                    geom.c_out
                )));
            }
        }
        let out = kernels::conv2d_forward(
            self.data(x),
            self.data(w),
            b.map(|b| self.data(b)),
            &geom,
        );
        let t = Tensor::new(vec![geom.c_out, geom.out_h, geom.out_w], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.derived(t, Op::Conv2d { x, w, b, geom }, &inputs))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::Dimension(format!(
                "softmax axis {axis} out of range for shape {shape:?}"
            )));
        }
        let outer = shape[..axis].iter().product();
        let len = shape[axis];
        let inner = shape[axis + 1..].iter().product();
        let t = Tensor::new(shape, kernels::softmax(self.data(x), outer, len, inner))?;
        Ok(self.derived(t, Op::Softmax { x, outer, len, inner }, &[x]))
    }

    /// Normalizes over the last axis, then applies `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let cols = *shape.last().ok_or_else(|| Error::Dimension("layer_norm on scalar".into()))?;
        if self.shape(gamma) != [cols] || self.shape(beta) != [cols] {
            return Err(Error::Dimension(format!(
                "layer_norm affine shapes {:?}/{:?} do not match normalized extent {cols}",
                self.shape(gamma),
                self.shape(beta)
            )));
        }
        let rows = self.value(x).numel() / cols.max(1);
        let (out, means, rstds) = kernels::layer_norm(
            self.data(x),
            self.data(gamma),
            self.data(beta),
            rows,
            cols,
            T::of(eps),
        );
        let t = Tensor::new(shape, out)?;
        Ok(self.derived(
            t,
            Op::LayerNorm { x, gamma, beta, rows, cols, means, rstds },
            &[x, gamma, beta],
        ))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let data = self.data(x).iter().map(|&v| kernels::gelu(v)).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data).expect("same shape");
        self.derived(t, Op::Gelu(x), &[x])
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`. Eval mode, and
    /// `p == 0`, return `x` itself without drawing from `rng`.
    pub fn dropout(&mut self, x: Var, p: f64, mode: Mode, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!("dropout probability {p} not in [0, 1)")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).numel())
            .map(|_| if rng.uniform() < p { T::zero() } else { keep })
            .collect();
        let data = self.data(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.derived(t, Op::Dropout { x, mask }, &[x]))
    }

    /// Bilinear resize of a `C×H×W` map (half-pixel centers, edge clamp).
    pub fn upsample(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let &[c, h, w] = self.shape(x) else {
            return Err(Error::Dimension(format!(
                "upsample expects C×H×W, got {:?}",
                self.shape(x)
            )));
        };
        if out_h == 0 || out_w == 0 {
            return Err(Error::Dimension("upsample target extents must be ≥ 1".into()));
        }
        let out = kernels::upsample_forward(self.data(x), c, h, w, out_h, out_w);
        let t = Tensor::new(vec![c, out_h, out_w], out)?;
        Ok(self.derived(t, Op::Upsample { x, c, h, w, out_h, out_w }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().copied().sum();
        self.derived(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = T::of(self.value(x).numel() as f64);
        let s = self.data(x).iter().copied().sum::<T>() / n;
        self.derived(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Mean pixel-wise cross-entropy. `logits` is `C×H×W` or `B×C×H×W`;
    /// `targets` holds one class id per pixel in `B×H×W` order.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[u8]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        let (batch, classes, h, w) = match shape[..] {
            [c, h, w] => (1, c, h, w),
            [b, c, h, w] => (b, c, h, w),
            _ => {
                return Err(Error::Dimension(format!(
                    "cross_entropy expects C×H×W or B×C×H×W logits, got {shape:?}"
                )))
            }
        };
        let pixels = h * w;
        if targets.len() != batch * pixels {
            return Err(Error::Dimension(format!(
                "cross_entropy: {} targets for logits {shape:?}",
                targets.len()
            )));
        }
        let mut ids = Vec::with_capacity(targets.len());
        for (i, &t) in targets.iter().enumerate() {
            if t as usize >= classes {
                let (b, p) = (i / pixels, i % pixels);
                return Err(Error::Data(format!(
                    "class id {t} out of range for {classes} classes at sample {b}, pixel (y={}, x={})",
                    p / w,
                    p % w
                )));
            }
            ids.push(t as usize);
        }
        let x = self.data(logits);
        let probs = kernels::softmax(x, batch, classes, pixels);
        let mut total = 0.0f64;
        for b in 0..batch {
            for p in 0..pixels {
                let at = |c: usize| (b * classes + c) * pixels + p;
                let max = (0..classes).map(|c| x[at(c)]).fold(T::neg_infinity(), T::max);
                let lse = max + (0..classes).map(|c| (x[at(c)] - max).exp()).sum::<T>().ln();
                total += (lse - x[at(ids[b * pixels + p])]).as_f64();
            }
        }
        let loss = T::of(total / (batch * pixels) as f64);
        Ok(self.derived(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, probs, targets: ids, batch, classes, pixels },
            &[logits],
        ))
    }

    /// Reverse-mode accumulation from a scalar `root`.
    ///
    /// Afterwards every node that requires a gradient holds one; leaves not
    /// reached from `root` hold zeros.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward from non-scalar root of shape {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![T::one()]);
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && grads[i].is_none() {
                grads[i] = Some(vec![T::zero(); node.value.numel()]);
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, delta: Vec<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.iter_mut().zip(delta).for_each(|(a, d)| *a += d),
            slot => *slot = Some(delta),
        }
    }

    fn accumulate_with(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let n = self.nodes[v.0].value.numel();
        let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); n]);
        f(slot);
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul { a, b, m, k, n } => {
                if self.nodes[a.0].requires_grad {
                    self.accumulate(grads, a, kernels::matmul_nt(g, self.data(b), m, n, k));
                }
                if self.nodes[b.0].requires_grad {
                    self.accumulate(grads, b, kernels::matmul_tn(self.data(a), g, m, k, n));
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, g.to_vec());
                self.accumulate(grads, b, g.to_vec());
            }
            &Op::Mul(a, b) => {
                let (da, db) = (self.data(a), self.data(b));
                self.accumulate(grads, a, g.iter().zip(db).map(|(&g, &y)| g * y).collect());
                self.accumulate(grads, b, g.iter().zip(da).map(|(&g, &x)| g * x).collect());
            }
            &Op::AddRowBias { x, bias, cols } => {
                self.accumulate(grads, x, g.to_vec());
                self.accumulate_with(grads, bias, |db| {
                    for (j, &v) in g.iter().enumerate() {
                        db[j % cols] += v;
                    }
                });
            }
            &Op::Scale(x, s) => self.accumulate(grads, x, g.iter().map(|&v| v * s).collect()),
            &Op::Transpose { x, rows, cols } => {
                self.accumulate(grads, x, kernels::transpose(g, cols, rows))
            }
            &Op::Reshape(x) => self.accumulate(grads, x, g.to_vec()),
            &Op::SliceCols { x, cols, start, len } => {
                self.accumulate_with(grads, x, |dx| {
                    for (r, row) in g.chunks(len).enumerate() {
                        for (j, &v) in row.iter().enumerate() {
                            dx[r * cols + start + j] += v;
                        }
                    }
                });
            }
            Op::ConcatCols { parts, rows } => {
                let total: usize = parts.iter().map(|p| p.1).sum();
                let mut offset = 0;
                for &(p, c) in parts {
                    self.accumulate_with(grads, p, |dp| {
                        for r in 0..*rows {
                            for j in 0..c {
                                dp[r * c + j] += g[r * total + offset + j];
                            }
                        }
                    });
                    offset += c;
                }
            }
            Op::ConcatLeading(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.nodes[p.0].value.numel();
                    self.accumulate(grads, p, g[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            &Op::Conv2d { x, w, b, ref geom } => {
                if self.nodes[x.0].requires_grad {
                    self.accumulate(grads, x, kernels::conv2d_backward_input(g, self.data(w), geom));
                }
                if self.nodes[w.0].requires_grad {
                    self.accumulate(grads, w, kernels::conv2d_backward_weight(g, self.data(x), geom));
                }
                if let Some(b) = b {
                    self.accumulate(grads, b, kernels::conv2d_backward_bias(g, geom));
                }
            }
            &Op::Softmax { x, outer, len, inner } => {
                let y = self.nodes[i].value.data();
                self.accumulate(grads, x, kernels::softmax_backward(y, g, outer, len, inner));
            }
            Op::LayerNorm { x, gamma, beta, rows, cols, means, rstds } => {
                let (dx, dgamma, dbeta) = kernels::layer_norm_backward(
                    self.data(*x),
                    self.data(*gamma),
                    means,
                    rstds,
                    g,
                    *rows,
                    *cols,
                );
                self.accumulate(grads, *x, dx);
                self.accumulate(grads, *gamma, dgamma);
                self.accumulate(grads, *beta, dbeta);
            }
            &Op::Gelu(x) => {
                let fault = if self.corrupt_gelu_backward { T::of(1.01) } else { T::one() };
                let dx = g
                    .iter()
                    .zip(self.data(x))
                    .map(|(&g, &v)| g * kernels::gelu_grad(v) * fault)
                    .collect();
                self.accumulate(grads, x, dx);
            }
            Op::Dropout { x, mask } => {
                self.accumulate(grads, *x, g.iter().zip(mask).map(|(&g, &m)| g * m).collect())
            }
            &Op::Upsample { x, c, h, w, out_h, out_w } => {
                self.accumulate(grads, x, kernels::upsample_backward(g, c, h, w, out_h, out_w))
            }
            &Op::Sum(x) => {
                let n = self.nodes[x.0].value.numel();
                self.accumulate(grads, x, vec![g[0]; n]);
            }
            &Op::Mean(x) => {
                let n = self.nodes[x.0].value.numel();
                self.accumulate(grads, x, vec![g[0] / T::of(n as f64); n]);
            }
            Op::CrossEntropy { logits, probs, targets, batch, classes, pixels } => {
                let scale = g[0] / T::of((batch * pixels) as f64);
                let mut d: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for b in 0..*batch {
                    for p in 0..*pixels {
                        let t = targets[b * pixels + p];
                        d[(b * classes + t) * pixels + p] -= scale;
                    }
                }
                self.accumulate(grads, *logits, d);
            }
        }
    }
}
