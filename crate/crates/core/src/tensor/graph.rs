use std::sync::Arc;

use super::kernels;
use super::{Real, Tensor};
use crate::error::TensorError;

type Result<T> = std::result::Result<T, TensorError>;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Precomputed bilinear lookup for one motion field: for each output pixel,
/// up to four `(source index, weight)` taps, or none when the lookup is invalid.
#[derive(Clone, Debug)]
pub struct WarpTaps {
    pub(crate) height: usize,
    pub(crate) width: usize,
    pub(crate) taps: Vec<Option<[(u32, f64); 4]>>,
}

impl WarpTaps {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_valid(&self, pixel: usize) -> bool {
        self.taps[pixel].is_some()
    }

    pub(crate) fn apply<T: Real>(&self, x: &[T], channels: usize) -> Vec<T> {
        let plane = self.height * self.width;
        let mut out = vec![T::zero(); channels * plane];
        for c in 0..channels {
            let src = &x[c * plane..(c + 1) * plane];
            let dst = &mut out[c * plane..(c + 1) * plane];
            for (p, taps) in self.taps.iter().enumerate() {
                if let Some(taps) = taps {
                    let mut acc = T::zero();
                    for &(i, wgt) in taps {
                        if wgt != 0.0 {
                            acc = acc + T::from_f64(wgt) * src[i as usize];
                        }
                    }
                    dst[p] = acc;
                }
            }
        }
        out
    }

    pub(crate) fn apply_adjoint<T: Real>(&self, dout: &[T], channels: usize) -> Vec<T> {
        let plane = self.height * self.width;
        let mut dx = vec![T::zero(); channels * plane];
        for c in 0..channels {
            let g = &dout[c * plane..(c + 1) * plane];
            let dst = &mut dx[c * plane..(c + 1) * plane];
            for (p, taps) in self.taps.iter().enumerate() {
                if let Some(taps) = taps {
                    for &(i, wgt) in taps {
                        if wgt != 0.0 {
                            dst[i as usize] = dst[i as usize] + T::from_f64(wgt) * g[p];
                        }
                    }
                }
            }
        }
        dx
    }
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var },
    MaxPool2 { x: Var, argmax: Vec<u32> },
    AvgPool2 { x: Var },
    Upsample2 { x: Var },
    Concat { parts: Vec<Var> },
    SliceChannels { x: Var, start: usize },
    SoftmaxPair { x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    MulChannel { a: Var, b: Var },
    MulConst { x: Var, c: Arc<Vec<T>> },
    Scale { x: Var, s: T },
    Relu { x: Var },
    Ln1p { x: Var },
    ChannelSum { x: Var },
    Sum { x: Var },
    Warp { x: Var, taps: Arc<WarpTaps> },
    Filter { x: Var, kernel: Arc<Vec<T>>, size: usize },
    Smape { d: Var, r: Var, eps: T },
    L1Mean { a: Var, b: Var },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Reverse-mode autodiff tape. One graph per forward pass; confined to one thread.
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::Shape { op, detail }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
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

    fn chw(&self, v: Var, op: &'static str) -> Result<(usize, usize, usize)> {
        self.value(v).chw().map_err(|_| shape_err(op, format!("expected CHW input, got {:?}", self.shape(v))))
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: "input" });
        }
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Input that gradients are tracked for.
    pub fn param(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Input treated as a constant.
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.leaf(value, false)
    }

    /// 3×3 convolution with zero padding 1; `w` is `out×in×3×3`, `b` has `out` entries.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (c, h, wd) = self.chw(x, "conv2d")?;
        let ws = self.shape(w).to_vec();
        if ws.len() != 4 || ws[1] != c || ws[2] != 3 || ws[3] != 3 {
            return Err(shape_err("conv2d", format!("weight {:?} incompatible with input {:?}", ws, [c, h, wd])));
        }
        if self.shape(b) != [ws[0]] {
            return Err(shape_err("conv2d", format!("bias {:?} does not match {} output channels", self.shape(b), ws[0])));
        }
        let out = kernels::conv3x3_forward(
            self.value(x).data(),
            (c, h, wd),
            self.value(w).data(),
            self.value(b).data(),
            ws[0],
        );
        let value = Tensor::new(vec![ws[0], h, wd], out)?;
        self.push("conv2d", value, Op::Conv2d { x, w, b }, &[x, w, b])
    }

    /// 2×2 max pooling with stride 2.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.chw(x, "maxpool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(shape_err("maxpool2", format!("extent {}x{} is not even", h, w)));
        }
        let (oh, ow) = (h / 2, w / 2);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = (ch * h + 2 * y) * w + 2 * xx;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = (ch * h + 2 * y + dy) * w + 2 * xx + dx;
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best as u32);
                }
            }
        }
        let value = Tensor::new(vec![c, oh, ow], out)?;
        self.push("maxpool2", value, Op::MaxPool2 { x, argmax }, &[x])
    }

    /// 2×2 average pooling with stride 2.
    pub fn avgpool2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.chw(x, "avgpool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(shape_err("avgpool2", format!("extent {}x{} is not even", h, w)));
        }
        let (oh, ow) = (h / 2, w / 2);
        let src = self.value(x).data();
        let quarter = T::from_f64(0.25);
        let mut out = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let i = (ch * h + 2 * y) * w + 2 * xx;
                    out.push((src[i] + src[i + 1] + src[i + w] + src[i + w + 1]) * quarter);
                }
            }
        }
        let value = Tensor::new(vec![c, oh, ow], out)?;
        self.push("avgpool2", value, Op::AvgPool2 { x }, &[x])
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.chw(x, "upsample2")?;
        let src = self.value(x).data();
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); c * oh * ow];
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    out[(ch * oh + y) * ow + xx] = src[(ch * h + y / 2) * w + xx / 2];
                }
            }
        }
        let value = Tensor::new(vec![c, oh, ow], out)?;
        self.push("upsample2", value, Op::Upsample2 { x }, &[x])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Tensor::concat(&values).map_err(|e| match e {
            TensorError::Shape { detail, .. } => shape_err("concat_channels", detail),
            other => other,
        })?;
        self.push("concat_channels", value, Op::Concat { parts: parts.to_vec() }, parts)
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, count: usize) -> Result<Var> {
        let value = self.value(x).channel_slice(start, count)?;
        self.push("slice_channels", value, Op::SliceChannels { x, start }, &[x])
    }

    /// Per-pixel softmax over a 2-channel logit image.
    pub fn softmax_pair(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.chw(x, "softmax_pair")?;
        if c != 2 {
            return Err(shape_err("softmax_pair", format!("expected 2 channels, got {}", c)));
        }
        let plane = h * w;
        let src = self.value(x).data();
        let limit = T::from_f64(80.0);
        let mut out = vec![T::zero(); 2 * plane];
        for p in 0..plane {
            let diff = (src[plane + p] - src[p]).max(-limit).min(limit);
            out[p] = T::one() / (T::one() + diff.exp());
            out[plane + p] = T::one() / (T::one() + (-diff).exp());
        }
        let value = Tensor::new(vec![2, h, w], out)?;
        self.push("softmax_pair", value, Op::SoftmaxPair { x }, &[x])
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(name, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push(name, value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    /// Multiply every channel of `b` by the single-channel image `a`.
    pub fn mul_channel(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ac, ah, aw) = self.chw(a, "mul_channel")?;
        let (c, h, w) = self.chw(b, "mul_channel")?;
        if ac != 1 || (ah, aw) != (h, w) {
            return Err(shape_err("mul_channel", format!("{:?} cannot scale {:?}", [ac, ah, aw], [c, h, w])));
        }
        let plane = h * w;
        let av = self.value(a).data();
        let data = self.value(b).data().iter().enumerate().map(|(i, &v)| av[i % plane] * v).collect();
        let value = Tensor::new(vec![c, h, w], data)?;
        self.push("mul_channel", value, Op::MulChannel { a, b }, &[a, b])
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(&mut self, x: Var, c: &Tensor<T>) -> Result<Var> {
        if self.shape(x) != c.shape() {
            return Err(shape_err("mul_const", format!("{:?} vs {:?}", self.shape(x), c.shape())));
        }
        let data = self.value(x).data().iter().zip(c.data()).map(|(&a, &b)| a * b).collect();
        let value = Tensor::new(self.shape(x).to_vec(), data)?;
        self.push("mul_const", value, Op::MulConst { x, c: Arc::new(c.data().to_vec()) }, &[x])
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let value = self.value(x).map(|v| v * s);
        self.push("scale", value, Op::Scale { x, s }, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push("relu", value, Op::Relu { x }, &[x])
    }

    /// `ln(1 + x)`, defined for `x ≥ 0`.
    pub fn ln1p(&mut self, x: Var) -> Result<Var> {
        if let Some((i, v)) = self.value(x).data().iter().enumerate().find(|(_, v)| **v < T::zero()) {
            return Err(TensorError::Domain { op: "ln1p", index: i, value: v.as_f64() });
        }
        let value = self.value(x).map(|v| v.ln_1p());
        self.push("ln1p", value, Op::Ln1p { x }, &[x])
    }

    /// Sum over channels, producing a single-channel image.
    pub fn channel_sum(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = self.chw(x, "channel_sum")?;
        let plane = h * w;
        let src = self.value(x).data();
        let mut out = vec![T::zero(); plane];
        for ch in 0..c {
            for (o, s) in out.iter_mut().zip(&src[ch * plane..(ch + 1) * plane]) {
                *o = *o + *s;
            }
        }
        let value = Tensor::new(vec![1, h, w], out)?;
        self.push("channel_sum", value, Op::ChannelSum { x }, &[x])
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let total: T = self.value(x).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(total), Op::Sum { x }, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len().max(1);
        let s = self.sum(x)?;
        self.scale(s, T::from_f64(1.0 / n as f64))
    }

    /// Resample `x` through a precomputed bilinear lookup; invalid pixels become zero.
    pub fn warp(&mut self, x: Var, taps: Arc<WarpTaps>) -> Result<Var> {
        let (c, h, w) = self.chw(x, "warp")?;
        if (h, w) != (taps.height, taps.width) {
            return Err(shape_err("warp", format!("image {}x{} vs motion {}x{}", h, w, taps.height, taps.width)));
        }
        let value = Tensor::new(vec![c, h, w], taps.apply(self.value(x).data(), c))?;
        self.push("warp", value, Op::Warp { x, taps }, &[x])
    }

    /// Per-channel correlation with a fixed odd square kernel (zero padding).
    pub fn filter(&mut self, x: Var, kernel: &[T], size: usize) -> Result<Var> {
        if size % 2 == 0 || kernel.len() != size * size {
            return Err(shape_err("filter", format!("kernel of {} values is not an odd square of side {}", kernel.len(), size)));
        }
        let dims = self.chw(x, "filter")?;
        let out = kernels::depthwise_filter(self.value(x).data(), dims, kernel, size);
        let value = Tensor::new(vec![dims.0, dims.1, dims.2], out)?;
        self.push("filter", value, Op::Filter { x, kernel: Arc::new(kernel.to_vec()), size }, &[x])
    }

    /// Symmetric mean absolute percentage error, averaged over every element.
    pub fn smape(&mut self, d: Var, r: Var, eps: T) -> Result<Var> {
        if self.shape(d) != self.shape(r) {
            return Err(shape_err("smape", format!("{:?} vs {:?}", self.shape(d), self.shape(r))));
        }
        let dv = self.value(d).data();
        let rv = self.value(r).data();
        let n = dv.len().max(1);
        let total: T = dv.iter().zip(rv).map(|(&a, &b)| (a - b).abs() / (a.abs() + b.abs() + eps)).sum();
        let value = Tensor::scalar(total / T::from_f64(n as f64));
        self.push("smape", value, Op::Smape { d, r, eps }, &[d, r])
    }

    /// Mean absolute difference.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("l1_mean", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let n = av.len().max(1);
        let total: T = av.iter().zip(bv).map(|(&x, &y)| (x - y).abs()).sum();
        self.push("l1_mean", Tensor::scalar(total / T::from_f64(n as f64)), Op::L1Mean { a, b }, &[a, b])
    }

    /// Reverse pass from a one-element output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        if self.value(output).len() != 1 {
            return Err(shape_err("backward", format!("output must be scalar, got {:?}", self.shape(output))));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(vec![T::one()]);

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if !g.iter().all(|v| v.is_finite()) {
                return Err(TensorError::NonFinite { op: "backward" });
            }
            self.backprop_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| g.map(|g| Tensor::new(n.value.shape().to_vec(), g).expect("gradient shape")))
            .collect();
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let mut acc = |v: Var, delta: Vec<T>| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, d) in existing.iter_mut().zip(delta) {
                        *e = *e + d;
                    }
                }
                slot => *slot = Some(delta),
            }
        };
        let val = |v: Var| nodes[v.0].value.data();
        let wants = |v: Var| nodes[v.0].requires_grad;

        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b } => {
                let dims = nodes[x.0].value.chw().expect("conv input");
                let out_ch = nodes[w.0].value.shape()[0];
                let cg = kernels::conv3x3_backward(val(*x), dims, val(*w), out_ch, g, wants(*x));
                if let Some(dx) = cg.dx {
                    acc(*x, dx);
                }
                acc(*w, cg.dw);
                acc(*b, cg.db);
            }
            Op::MaxPool2 { x, argmax } => {
                let mut dx = vec![T::zero(); nodes[x.0].value.len()];
                for (&i, &gv) in argmax.iter().zip(g) {
                    dx[i as usize] = dx[i as usize] + gv;
                }
                acc(*x, dx);
            }
            Op::AvgPool2 { x } => {
                let (c, h, w) = nodes[x.0].value.chw().expect("pool input");
                let (oh, ow) = (h / 2, w / 2);
                let quarter = T::from_f64(0.25);
                let mut dx = vec![T::zero(); c * h * w];
                for ch in 0..c {
                    for y in 0..h {
                        for xx in 0..w {
                            dx[(ch * h + y) * w + xx] = g[(ch * oh + y / 2) * ow + xx / 2] * quarter;
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::Upsample2 { x } => {
                let (c, h, w) = nodes[x.0].value.chw().expect("upsample input");
                let (oh, ow) = (2 * h, 2 * w);
                let mut dx = vec![T::zero(); c * h * w];
                for ch in 0..c {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let i = (ch * h + y / 2) * w + xx / 2;
                            dx[i] = dx[i] + g[(ch * oh + y) * ow + xx];
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::Concat { parts } => {
                let mut offset = 0;
                for p in parts {
                    let n = nodes[p.0].value.len();
                    acc(*p, g[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::SliceChannels { x, start } => {
                let (_, h, w) = nodes[x.0].value.chw().expect("slice input");
                let mut dx = vec![T::zero(); nodes[x.0].value.len()];
                let offset = start * h * w;
                dx[offset..offset + g.len()].copy_from_slice(g);
                acc(*x, dx);
            }
            Op::SoftmaxPair { x } => {
                let s = node.value.data();
                let plane = s.len() / 2;
                let mut dx = vec![T::zero(); 2 * plane];
                for p in 0..plane {
                    let (s0, s1) = (s[p], s[plane + p]);
                    let dot = g[p] * s0 + g[plane + p] * s1;
                    dx[p] = s0 * (g[p] - dot);
                    dx[plane + p] = s1 * (g[plane + p] - dot);
                }
                acc(*x, dx);
            }
            Op::Add { a, b } => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Sub { a, b } => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|&v| -v).collect());
            }
            Op::Mul { a, b } => {
                if wants(*a) {
                    acc(*a, g.iter().zip(val(*b)).map(|(&gv, &bv)| gv * bv).collect());
                }
                if wants(*b) {
                    acc(*b, g.iter().zip(val(*a)).map(|(&gv, &av)| gv * av).collect());
                }
            }
            Op::MulChannel { a, b } => {
                let av = val(*a);
                let plane = av.len();
                if wants(*a) {
                    let mut da = vec![T::zero(); plane];
                    for (i, (&gv, &bv)) in g.iter().zip(val(*b)).enumerate() {
                        da[i % plane] = da[i % plane] + gv * bv;
                    }
                    acc(*a, da);
                }
                if wants(*b) {
                    acc(*b, g.iter().enumerate().map(|(i, &gv)| gv * av[i % plane]).collect());
                }
            }
            Op::MulConst { x, c } => acc(*x, g.iter().zip(c.iter()).map(|(&gv, &cv)| gv * cv).collect()),
            Op::Scale { x, s } => acc(*x, g.iter().map(|&gv| gv * *s).collect()),
            Op::Relu { x } => acc(
                *x,
                g.iter().zip(val(*x)).map(|(&gv, &xv)| if xv > T::zero() { gv } else { T::zero() }).collect(),
            ),
            Op::Ln1p { x } => acc(*x, g.iter().zip(val(*x)).map(|(&gv, &xv)| gv / (T::one() + xv)).collect()),
            Op::ChannelSum { x } => {
                let n = nodes[x.0].value.len();
                let plane = g.len();
                acc(*x, (0..n).map(|i| g[i % plane]).collect());
            }
            Op::Sum { x } => acc(*x, vec![g[0]; nodes[x.0].value.len()]),
            Op::Warp { x, taps } => {
                let c = nodes[x.0].value.shape()[0];
                acc(*x, taps.apply_adjoint(g, c));
            }
            Op::Filter { x, kernel, size } => {
                let dims = nodes[x.0].value.chw().expect("filter input");
                acc(*x, kernels::depthwise_filter_adjoint(g, dims, kernel, *size));
            }
            Op::Smape { d, r, eps } => {
                let (dv, rv) = (val(*d), val(*r));
                let scale = g[0] / T::from_f64(dv.len().max(1) as f64);
                let sign = |v: T| {
                    if v > T::zero() {
                        T::one()
                    } else if v < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    }
                };
                let mut dd = vec![T::zero(); dv.len()];
                let mut dr = vec![T::zero(); dv.len()];
                for i in 0..dv.len() {
                    let diff = dv[i] - rv[i];
                    let den = dv[i].abs() + rv[i].abs() + *eps;
                    let ratio = diff.abs() / (den * den);
                    dd[i] = scale * (sign(diff) / den - ratio * sign(dv[i]));
                    dr[i] = scale * (-sign(diff) / den - ratio * sign(rv[i]));
                }
                if wants(*d) {
                    acc(*d, dd);
                }
                if wants(*r) {
                    acc(*r, dr);
                }
            }
            Op::L1Mean { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                let scale = g[0] / T::from_f64(av.len().max(1) as f64);
                let da: Vec<T> = av
                    .iter()
                    .zip(bv)
                    .map(|(&x, &y)| {
                        if x > y {
                            scale
                        } else if x < y {
                            -scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                if wants(*b) {
                    acc(*b, da.iter().map(|&v| -v).collect());
                }
                if wants(*a) {
                    acc(*a, da);
                }
            }
        }
    }
}

/// Gradients of one scalar output with respect to every tracked node.
pub struct Gradients<T: Real = f32> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for `v`; `None` if `v` does not influence the output or is constant.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, or zeros shaped like `like` when it has none.
    pub fn get_or_zeros(&self, v: Var, like: &[usize]) -> Tensor<T> {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.to_vec()))
    }
}
