//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive applied during a forward pass. Values
//! are addressed through lightweight [`Var`] handles. [`Tape::backward`]
//! replays the record in exact reverse order and returns a [`GradientSet`]
//! holding one gradient per tracked leaf.
//!
//! Only leaves created with [`Tape::leaf`] are tracked; subgraphs that do not
//! depend on a tracked leaf are skipped on the backward pass.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::{self, ConvGeom, Tensor};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d { input: Var, kernel: Var, geom: ConvGeom, cols: Vec<f32> },
    ChannelBias { input: Var, bias: Var },
    Dense { input: Var, weights: Var, bias: Var },
    Relu(Var),
    AvgPool2(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    Square(Var),
    Ln(Var),
    ReduceSum(Var),
    SumChannels(Var),
    Reshape(Var),
    Blur { input: Var, kernel: Vec<f32> },
    SoftmaxXent { logits: Var, labels: Vec<usize>, probs: Vec<f32> },
    Density { input: Var, totals: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar root with respect to every tracked leaf.
#[derive(Debug)]
pub struct GradientSet {
    tape: u64,
    grads: Vec<Option<Tensor>>,
}

impl GradientSet {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get(var.index).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        if var.tape != self.tape {
            return None;
        }
        self.grads.get_mut(var.index).and_then(|g| g.take())
    }
}

fn acc(slot: &mut Option<Vec<f32>>, len: usize) -> &mut Vec<f32> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    pub fn new() -> Self {
        Tape { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced by {op:?}");
        self.nodes.push(Node { value, op, needs_grad });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    fn check(&self, v: Var) -> Result<&Node> {
        if v.tape != self.id {
            return Err(Error::NotOnTape);
        }
        self.nodes.get(v.index).ok_or(Error::NotOnTape)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.index].needs_grad)
    }

    /// Record a tracked input; its gradient appears in the [`GradientSet`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Record an untracked input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable from another tape");
        &self.nodes[v.index].value
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, pad: usize) -> Result<Var> {
        let (x, k) = (&self.check(input)?.value, &self.check(kernel)?.value);
        if x.ndim() != 4 {
            return Err(Error::shape("conv2d", format!("input must be NCHW, got {:?}", x.shape())));
        }
        if k.ndim() != 4 {
            return Err(Error::shape("conv2d", format!("kernel must be OIHW, got {:?}", k.shape())));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive"));
        }
        let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (o, kc, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
        if kc != c {
            return Err(Error::shape(
                "conv2d",
                format!("channel dimension: input has {c}, kernel expects {kc}"),
            ));
        }
        let oh = tensor::conv_out_extent(h, kh, stride, pad)
            .ok_or_else(|| Error::shape("conv2d", format!("height {h} too small for kernel {kh}")))?;
        let ow = tensor::conv_out_extent(w, kw, stride, pad)
            .ok_or_else(|| Error::shape("conv2d", format!("width {w} too small for kernel {kw}")))?;
        let geom = ConvGeom { c, h, w, kh, kw, stride, pad, oh, ow };
        let (rows, ncols) = (geom.col_rows(), geom.col_cols());
        let mut cols = vec![0.0f32; n * rows * ncols];
        let mut out = vec![0.0f32; n * o * ncols];
        for s in 0..n {
            let col = &mut cols[s * rows * ncols..(s + 1) * rows * ncols];
            tensor::im2col(&x.data()[s * c * h * w..(s + 1) * c * h * w], &geom, col);
            tensor::matmul_acc(k.data(), col, &mut out[s * o * ncols..(s + 1) * o * ncols], o, rows, ncols);
        }
        let value = Tensor::new(vec![n, o, oh, ow], out)?;
        let needs = self.grad_flag(&[input, kernel]);
        Ok(self.push(value, Op::Conv2d { input, kernel, geom, cols }, needs))
    }

    /// Add a per-channel bias to an N×C×… tensor.
    pub fn channel_bias(&mut self, input: Var, bias: Var) -> Result<Var> {
        let (x, b) = (&self.check(input)?.value, &self.check(bias)?.value);
        if x.ndim() < 2 || b.shape() != [x.shape()[1]] {
            return Err(Error::shape(
                "channel_bias",
                format!("bias {:?} does not match channels of {:?}", b.shape(), x.shape()),
            ));
        }
        let c = x.shape()[1];
        let inner: usize = x.shape()[2..].iter().product();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += b.data()[(i / inner) % c];
        }
        let needs = self.grad_flag(&[input, bias]);
        Ok(self.push(out, Op::ChannelBias { input, bias }, needs))
    }

    /// Affine map `x·W + b` with `x: N×in`, `W: in×out`, `b: out`.
    pub fn dense(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        let (x, wt, b) = (
            &self.check(input)?.value,
            &self.check(weights)?.value,
            &self.check(bias)?.value,
        );
        if x.ndim() != 2 || wt.ndim() != 2 {
            return Err(Error::shape(
                "dense",
                format!("expected 2-D input and weights, got {:?} and {:?}", x.shape(), wt.shape()),
            ));
        }
        let (n, din) = (x.shape()[0], x.shape()[1]);
        let dout = wt.shape()[1];
        if wt.shape()[0] != din {
            return Err(Error::shape(
                "dense",
                format!("inner dimension: input has {din}, weights expect {}", wt.shape()[0]),
            ));
        }
        if b.shape() != [dout] {
            return Err(Error::shape("dense", format!("bias {:?} vs output {dout}", b.shape())));
        }
        let mut out = vec![0.0f32; n * dout];
        for row in out.chunks_mut(dout) {
            row.copy_from_slice(b.data());
        }
        tensor::matmul_acc(x.data(), wt.data(), &mut out, n, din, dout);
        let value = Tensor::new(vec![n, dout], out)?;
        let needs = self.grad_flag(&[input, weights, bias]);
        Ok(self.push(value, Op::Dense { input, weights, bias }, needs))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let value = self.check(input)?.value.map(|v| if v > 0.0 { v } else { 0.0 });
        let needs = self.grad_flag(&[input]);
        Ok(self.push(value, Op::Relu(input), needs))
    }

    /// 2×2 average pooling with stride 2 over the trailing two axes (floor).
    pub fn avg_pool2(&mut self, input: Var) -> Result<Var> {
        let x = &self.check(input)?.value;
        if x.ndim() < 2 {
            return Err(Error::shape("avg_pool2", format!("need ≥2 axes, got {:?}", x.shape())));
        }
        let nd = x.ndim();
        let (h, w) = (x.shape()[nd - 2], x.shape()[nd - 1]);
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return Err(Error::shape("avg_pool2", format!("spatial extent {h}×{w} too small")));
        }
        let planes: usize = x.shape()[..nd - 2].iter().product();
        let mut out = Vec::with_capacity(planes * oh * ow);
        for p in 0..planes {
            let src = &x.data()[p * h * w..(p + 1) * h * w];
            for i in 0..oh {
                for j in 0..ow {
                    let s = src[2 * i * w + 2 * j]
                        + src[2 * i * w + 2 * j + 1]
                        + src[(2 * i + 1) * w + 2 * j]
                        + src[(2 * i + 1) * w + 2 * j + 1];
                    out.push(0.25 * s);
                }
            }
        }
        let mut shape = x.shape()[..nd - 2].to_vec();
        shape.extend([oh, ow]);
        let value = Tensor::new(shape, out)?;
        let needs = self.grad_flag(&[input]);
        Ok(self.push(value, Op::AvgPool2(input), needs))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        let (x, y) = (&self.check(a)?.value, &self.check(b)?.value);
        if x.shape() != y.shape() {
            return Err(Error::shape(name, format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        x.zip_map(y, f)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "add", |x, y| x + y)?;
        let needs = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "sub", |x, y| x - y)?;
        let needs = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), needs))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary(a, b, "mul", |x, y| x * y)?;
        let needs = self.grad_flag(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, input: Var, factor: f32) -> Result<Var> {
        let value = self.check(input)?.value.map(|v| v * factor);
        let needs = self.grad_flag(&[input]);
        Ok(self.push(value, Op::Scale(input, factor), needs))
    }

    pub fn square(&mut self, input: Var) -> Result<Var> {
        let value = self.check(input)?.value.map(|v| v * v);
        let needs = self.grad_flag(&[input]);
        Ok(self.push(value, Op::Square(input), needs))
    }

    pub fn ln(&mut self, input: Var) -> Result<Var> {
        let x = &self.check(input)?.value;
        if x.data().iter().any(|&v| v <= 0.0) {
            return Err(Error::invalid("ln", "argument must be strictly positive"));
        }
        let value = x.map(f32::ln);
        let needs = self.grad_flag(&[input]);
        Ok(self.push(value, Op::Ln(input), needs))
    }

    /// Sum of all elements as a scalar.
    pub fn reduce_sum(&mut self, input: Var) -> Result<Var> {
        let total = self.check(input)?.value.sum() as f32;
        let needs = self.grad_flag(&[input]);
        Ok(self.push(Tensor::scalar(total), Op::ReduceSum(input), needs))
    }

    /// N×C×H×W → N×H×W by summing over channels.
    pub fn sum_channels(&mut self, input: Var) -> Result<Var> {
        let x = &self.check(input)?.value;
        if x.ndim() != 4 {
            return Err(Error::shape("sum_channels", format!("expected NCHW, got {:?}", x.shape())));
        }
        let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let mut out = vec![0.0f32; n * h * w];
        for s in 0..n {
            for p in 0..h * w {
                let mut acc = 0.0f64;
                for ch in 0..c {
                    acc += x.data()[((s * c + ch) * h * w) + p] as f64;
                }
                out[s * h * w + p] = acc as f32;
            }
        }
        let value = Tensor::new(vec![n, h, w], out)?;
        let needs = self.grad_flag(&[input]);
        Ok(self.push(value, Op::SumChannels(input), needs))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.check(input)?.value.clone().reshape(shape)?;
        let needs = self.grad_flag(&[input]);
        Ok(self.push(value, Op::Reshape(input), needs))
    }

    /// Separable Gaussian blur over the trailing two axes, replicating edges.
    pub fn gaussian_blur(&mut self, input: Var, sigma: f32, radius: usize) -> Result<Var> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid("gaussian_blur", format!("sigma must be positive, got {sigma}")));
        }
        if radius < 1 {
            return Err(Error::invalid("gaussian_blur", "radius must be at least 1"));
        }
        let x = &self.check(input)?.value;
        if x.ndim() < 2 {
            return Err(Error::shape("gaussian_blur", format!("need ≥2 axes, got {:?}", x.shape())));
        }
        let nd = x.ndim();
        let (h, w) = (x.shape()[nd - 2], x.shape()[nd - 1]);
        let kernel = tensor::gaussian_kernel(sigma, radius);
        let mut out = vec![0.0f32; x.len()];
        for (src, dst) in x.data().chunks(h * w).zip(out.chunks_mut(h * w)) {
            tensor::blur_plane(src, h, w, &kernel, dst);
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let needs = self.grad_flag(&[input]);
        Ok(self.push(value, Op::Blur { input, kernel }, needs))
    }

    /// Per-sample `−log softmax(logits)[label]`, max-subtracted.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let z = &self.check(logits)?.value;
        if z.ndim() != 2 || z.shape()[0] != labels.len() {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("logits {:?} vs {} labels", z.shape(), labels.len()),
            ));
        }
        let k = z.shape()[1];
        if k < 2 {
            return Err(Error::invalid("softmax_cross_entropy", "need at least two classes"));
        }
        let mut losses = Vec::with_capacity(labels.len());
        let mut probs = vec![0.0f32; z.len()];
        for (s, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(Error::LabelOutOfRange { label, classes: k });
            }
            let row = &z.data()[s * k..(s + 1) * k];
            let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
            let total: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
            let lse = max + total.ln();
            losses.push((lse - row[label] as f64) as f32);
            for (p, &v) in probs[s * k..(s + 1) * k].iter_mut().zip(row) {
                *p = ((v as f64 - lse).exp()) as f32;
            }
        }
        let value = Tensor::new(vec![labels.len()], losses)?;
        let needs = self.grad_flag(&[logits]);
        Ok(self.push(value, Op::SoftmaxXent { logits, labels: labels.to_vec(), probs }, needs))
    }

    /// Normalize each leading-axis slice of a nonnegative tensor into a
    /// density: `s = (e + floor) / Σ(e + floor)`.
    pub fn density(&mut self, input: Var, floor: f32) -> Result<Var> {
        let x = &self.check(input)?.value;
        if x.ndim() < 1 || x.is_empty() {
            return Err(Error::shape("density", "empty input"));
        }
        if x.data().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("density", "energy must be nonnegative"));
        }
        let inner = x.len() / x.shape()[0];
        let mut out = vec![0.0f32; x.len()];
        let mut totals = Vec::with_capacity(x.shape()[0]);
        for (src, dst) in x.data().chunks(inner).zip(out.chunks_mut(inner)) {
            let total: f64 = src.iter().map(|&v| v as f64 + floor as f64).sum();
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = ((v as f64 + floor as f64) / total) as f32;
            }
            totals.push(total);
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        let needs = self.grad_flag(&[input]);
        Ok(self.push(value, Op::Density { input, totals }, needs))
    }

    /// Gradients of the scalar `root` with respect to every tracked leaf.
    pub fn backward(&self, root: Var) -> Result<GradientSet> {
        let root_node = self.check(root)?;
        if root_node.value.len() != 1 {
            return Err(Error::NonScalarRoot(root_node.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f32>>> = (0..=root.index).map(|_| None).collect();
        grads[root.index] = Some(vec![1.0]);

        for idx in (0..=root.index).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let node = &self.nodes[i];
                if matches!(node.op, Op::Leaf) && node.needs_grad {
                    let data = g.unwrap_or_else(|| vec![0.0; node.value.len()]);
                    Some(Tensor::new(node.value.shape().to_vec(), data).expect("gradient shape"))
                } else {
                    None
                }
            })
            .collect();
        Ok(GradientSet { tape: self.id, grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.index].needs_grad
    }

    fn propagate(&self, node: &Node, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, kernel, geom, cols } => {
                let x = &self.nodes[input.index].value;
                let k = &self.nodes[kernel.index].value;
                let n = x.shape()[0];
                let o = k.shape()[0];
                let (rows, ncols) = (geom.col_rows(), geom.col_cols());
                if self.wants(*kernel) {
                    let gk = acc(&mut grads[kernel.index], k.len());
                    for s in 0..n {
                        let go = &g[s * o * ncols..(s + 1) * o * ncols];
                        let col = &cols[s * rows * ncols..(s + 1) * rows * ncols];
                        tensor::matmul_bt_acc(go, col, gk, o, ncols, rows);
                    }
                }
                if self.wants(*input) {
                    let per = geom.c * geom.h * geom.w;
                    let gx = acc(&mut grads[input.index], x.len());
                    let mut dcol = vec![0.0f32; rows * ncols];
                    for s in 0..n {
                        dcol.fill(0.0);
                        let go = &g[s * o * ncols..(s + 1) * o * ncols];
                        tensor::matmul_at_acc(k.data(), go, &mut dcol, o, rows, ncols);
                        tensor::col2im(&dcol, geom, &mut gx[s * per..(s + 1) * per]);
                    }
                }
            }
            Op::ChannelBias { input, bias } => {
                let x = &self.nodes[input.index].value;
                if self.wants(*input) {
                    add_into(acc(&mut grads[input.index], g.len()), g);
                }
                if self.wants(*bias) {
                    let c = x.shape()[1];
                    let inner: usize = x.shape()[2..].iter().product();
                    let mut sums = vec![0.0f64; c];
                    for (i, &v) in g.iter().enumerate() {
                        sums[(i / inner) % c] += v as f64;
                    }
                    let gb = acc(&mut grads[bias.index], c);
                    for (d, s) in gb.iter_mut().zip(sums) {
                        *d += s as f32;
                    }
                }
            }
            Op::Dense { input, weights, bias } => {
                let x = &self.nodes[input.index].value;
                let wt = &self.nodes[weights.index].value;
                let (n, din) = (x.shape()[0], x.shape()[1]);
                let dout = wt.shape()[1];
                if self.wants(*input) {
                    let gx = acc(&mut grads[input.index], x.len());
                    tensor::matmul_bt_acc(g, wt.data(), gx, n, dout, din);
                }
                if self.wants(*weights) {
                    let gw = acc(&mut grads[weights.index], wt.len());
                    tensor::matmul_at_acc(x.data(), g, gw, n, din, dout);
                }
                if self.wants(*bias) {
                    let gb = acc(&mut grads[bias.index], dout);
                    for j in 0..dout {
                        let s: f64 = (0..n).map(|r| g[r * dout + j] as f64).sum();
                        gb[j] += s as f32;
                    }
                }
            }
            Op::Relu(input) => {
                let x = &self.nodes[input.index].value;
                let gx = acc(&mut grads[input.index], x.len());
                for ((d, &gv), &xv) in gx.iter_mut().zip(g).zip(x.data()) {
                    if xv > 0.0 {
                        *d += gv;
                    }
                }
            }
            Op::AvgPool2(input) => {
                let x = &self.nodes[input.index].value;
                let nd = x.ndim();
                let (h, w) = (x.shape()[nd - 2], x.shape()[nd - 1]);
                let (oh, ow) = (h / 2, w / 2);
                let gx = acc(&mut grads[input.index], x.len());
                for (p, gp) in g.chunks(oh * ow).enumerate() {
                    let dst = &mut gx[p * h * w..(p + 1) * h * w];
                    for i in 0..oh {
                        for j in 0..ow {
                            let v = 0.25 * gp[i * ow + j];
                            dst[2 * i * w + 2 * j] += v;
                            dst[2 * i * w + 2 * j + 1] += v;
                            dst[(2 * i + 1) * w + 2 * j] += v;
                            dst[(2 * i + 1) * w + 2 * j + 1] += v;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(*v) {
                        add_into(acc(&mut grads[v.index], g.len()), g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    add_into(acc(&mut grads[a.index], g.len()), g);
                }
                if self.wants(*b) {
                    let gb = acc(&mut grads[b.index], g.len());
                    for (d, &v) in gb.iter_mut().zip(g) {
                        *d -= v;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (xa, xb) = (&self.nodes[a.index].value, &self.nodes[b.index].value);
                if self.wants(*a) {
                    let ga = acc(&mut grads[a.index], g.len());
                    for ((d, &gv), &o) in ga.iter_mut().zip(g).zip(xb.data()) {
                        *d += gv * o;
                    }
                }
                if self.wants(*b) {
                    let gb = acc(&mut grads[b.index], g.len());
                    for ((d, &gv), &o) in gb.iter_mut().zip(g).zip(xa.data()) {
                        *d += gv * o;
                    }
                }
            }
            Op::Scale(input, factor) => {
                let gx = acc(&mut grads[input.index], g.len());
                for (d, &v) in gx.iter_mut().zip(g) {
                    *d += v * factor;
                }
            }
            Op::Square(input) => {
                let x = &self.nodes[input.index].value;
                let gx = acc(&mut grads[input.index], g.len());
                for ((d, &gv), &xv) in gx.iter_mut().zip(g).zip(x.data()) {
                    *d += 2.0 * xv * gv;
                }
            }
            Op::Ln(input) => {
                let x = &self.nodes[input.index].value;
                let gx = acc(&mut grads[input.index], g.len());
                for ((d, &gv), &xv) in gx.iter_mut().zip(g).zip(x.data()) {
                    *d += gv / xv;
                }
            }
            Op::ReduceSum(input) => {
                let n = self.nodes[input.index].value.len();
                let gx = acc(&mut grads[input.index], n);
                for d in gx.iter_mut() {
                    *d += g[0];
                }
            }
            Op::SumChannels(input) => {
                let x = &self.nodes[input.index].value;
                let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
                let gx = acc(&mut grads[input.index], x.len());
                for s in 0..n {
                    for ch in 0..c {
                        let dst = &mut gx[(s * c + ch) * h * w..(s * c + ch + 1) * h * w];
                        add_into(dst, &g[s * h * w..(s + 1) * h * w]);
                    }
                }
            }
            Op::Reshape(input) => {
                add_into(acc(&mut grads[input.index], g.len()), g);
            }
            Op::Blur { input, kernel } => {
                let x = &self.nodes[input.index].value;
                let nd = x.ndim();
                let (h, w) = (x.shape()[nd - 2], x.shape()[nd - 1]);
                let gx = acc(&mut grads[input.index], x.len());
                for (src, dst) in g.chunks(h * w).zip(gx.chunks_mut(h * w)) {
                    tensor::blur_plane_adjoint(src, h, w, kernel, dst);
                }
            }
            Op::SoftmaxXent { logits, labels, probs } => {
                let k = probs.len() / labels.len();
                let gz = acc(&mut grads[logits.index], probs.len());
                for (s, &label) in labels.iter().enumerate() {
                    for j in 0..k {
                        let onehot = if j == label { 1.0 } else { 0.0 };
                        gz[s * k + j] += g[s] * (probs[s * k + j] - onehot);
                    }
                }
            }
            Op::Density { input, totals, .. } => {
                let out = &node.value;
                let inner = out.len() / totals.len();
                let gx = acc(&mut grads[input.index], out.len());
                for (s, &total) in totals.iter().enumerate() {
                    let range = s * inner..(s + 1) * inner;
                    let gs = &g[range.clone()];
                    let ss = &out.data()[range.clone()];
                    // ∂s_j/∂e_i = (δ_ij − s_j) / total
                    let inner_prod: f64 = gs.iter().zip(ss).map(|(&a, &b)| a as f64 * b as f64).sum();
                    for (d, &gv) in gx[range].iter_mut().zip(gs) {
                        *d += ((gv as f64 - inner_prod) / total) as f32;
                    }
                }
            }
        }
    }
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
