//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] is a Wengert list: every operation appends a node holding its
//! value and the recipe for its vector-Jacobian product. [`Tape::backward`]
//! walks the list in exact reverse recording order. Only leaf nodes keep
//! their gradients after the walk; intermediate gradients are released as
//! soon as they have been propagated.

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeom, ConvGrads};
use crate::tensor::{Shape, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ConvKind {
    Dense,
    DenseTranspose,
    Depthwise,
    DepthwiseTranspose,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        kind: ConvKind,
    },
    InstanceNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Add(Var, Var),
    Scale(Var, f64),
    ConcatChannels(Var, Var),
    Mean(Var),
    L1(Var, Var),
    BceWithLogits(Var, f64),
    SoftmaxCrossEntropy {
        x: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Gradient of a leaf, or zeros if nothing reached it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor {
        self.grad(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.shape(v)))
    }

    /// Clears accumulated leaf gradients.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Which side of its kink every element of every recorded ReLU, leaky
    /// ReLU and L1 input sits on. Two evaluations with equal patterns lie in
    /// the same linear piece of those ops. Nodes recorded without gradient
    /// tracking keep no op and are skipped.
    pub fn kink_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            match n.op {
                Op::Relu(x) | Op::LeakyRelu(x, _) => {
                    out.extend(self.value(x).data().iter().map(|&v| v > 0.0))
                }
                Op::L1(a, b) => {
                    let (a, b) = (self.value(a).data(), self.value(b).data());
                    out.extend(a.iter().zip(b).map(|(a, b)| a > b));
                }
                _ => {}
            }
        }
        out
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn check_vector(&self, op: &'static str, name: &'static str, v: Var, len: usize) -> Result<()> {
        let s = self.shape(v);
        if s.numel() != len {
            return Err(Error::Shape {
                op,
                lhs_name: name,
                lhs: s,
                rhs_name: "expected",
                rhs: Shape::new(1, len, 1, 1),
            });
        }
        Ok(())
    }

    /// Cross-correlation with zero padding. `w` is `(cout, cin, k, k)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        const OP: &str = "conv2d";
        let (xs, ws) = (self.shape(x), self.shape(w));
        if ws.c != xs.c || ws.h != ws.w {
            return Err(Error::Shape {
                op: OP,
                lhs_name: "input",
                lhs: xs,
                rhs_name: "weight",
                rhs: ws,
            });
        }
        self.check_vector(OP, "bias", b, ws.n)?;
        let geom = ConvGeom::conv(xs.h, xs.w, ws.h, stride, pad).ok_or_else(|| {
            Error::invalid(
                OP,
                format!(
                    "kernel {} stride {stride} pad {pad} does not fit input {xs}",
                    ws.h
                ),
            )
        })?;
        let out =
            kernels::conv2d_forward(self.value(x), self.value(w), self.value(b).data(), &geom);
        Ok(self.push(
            out,
            Op::Conv {
                x,
                w,
                b,
                geom,
                kind: ConvKind::Dense,
            },
            &[x, w, b],
        ))
    }

    /// 1x1 convolution mixing channels; `w` is `(cout, cin, 1, 1)`.
    pub fn pointwise_conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let ws = self.shape(w);
        if ws.h != 1 || ws.w != 1 {
            return Err(Error::invalid(
                "pointwise_conv2d",
                format!("kernel must be 1x1, weight is {ws}"),
            ));
        }
        self.conv2d(x, w, b, 1, 0)
    }

    /// Per-channel spatial convolution; `w` is `(c, 1, k, k)`.
    pub fn depthwise_conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        const OP: &str = "depthwise_conv2d";
        let (xs, ws) = (self.shape(x), self.shape(w));
        if ws.n != xs.c || ws.c != 1 || ws.h != ws.w {
            return Err(Error::Shape {
                op: OP,
                lhs_name: "input",
                lhs: xs,
                rhs_name: "weight",
                rhs: ws,
            });
        }
        self.check_vector(OP, "bias", b, xs.c)?;
        let geom = ConvGeom::conv(xs.h, xs.w, ws.h, stride, pad).ok_or_else(|| {
            Error::invalid(
                OP,
                format!(
                    "kernel {} stride {stride} pad {pad} does not fit input {xs}",
                    ws.h
                ),
            )
        })?;
        let out =
            kernels::depthwise_forward(self.value(x), self.value(w), self.value(b).data(), &geom);
        Ok(self.push(
            out,
            Op::Conv {
                x,
                w,
                b,
                geom,
                kind: ConvKind::Depthwise,
            },
            &[x, w, b],
        ))
    }

    /// Transposed convolution; `w` is `(cin, cout, k, k)`. Output size is
    /// `(h - 1) * stride - 2 * pad + k`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        const OP: &str = "conv_transpose2d";
        let (xs, ws) = (self.shape(x), self.shape(w));
        if ws.n != xs.c || ws.h != ws.w {
            return Err(Error::Shape {
                op: OP,
                lhs_name: "input",
                lhs: xs,
                rhs_name: "weight",
                rhs: ws,
            });
        }
        self.check_vector(OP, "bias", b, ws.c)?;
        let geom = ConvGeom::transposed(xs.h, xs.w, ws.h, stride, pad).ok_or_else(|| {
            Error::invalid(
                OP,
                format!(
                    "kernel {} stride {stride} pad {pad} invalid for input {xs}",
                    ws.h
                ),
            )
        })?;
        let out = kernels::conv_transpose2d_forward(
            self.value(x),
            self.value(w),
            self.value(b).data(),
            &geom,
        );
        Ok(self.push(
            out,
            Op::Conv {
                x,
                w,
                b,
                geom,
                kind: ConvKind::DenseTranspose,
            },
            &[x, w, b],
        ))
    }

    /// Per-channel transposed convolution; `w` is `(c, 1, k, k)`.
    pub fn depthwise_conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        const OP: &str = "depthwise_conv_transpose2d";
        let (xs, ws) = (self.shape(x), self.shape(w));
        if ws.n != xs.c || ws.c != 1 || ws.h != ws.w {
            return Err(Error::Shape {
                op: OP,
                lhs_name: "input",
                lhs: xs,
                rhs_name: "weight",
                rhs: ws,
            });
        }
        self.check_vector(OP, "bias", b, xs.c)?;
        let geom = ConvGeom::transposed(xs.h, xs.w, ws.h, stride, pad).ok_or_else(|| {
            Error::invalid(
                OP,
                format!(
                    "kernel {} stride {stride} pad {pad} invalid for input {xs}",
                    ws.h
                ),
            )
        })?;
        let out = kernels::depthwise_transpose_forward(
            self.value(x),
            self.value(w),
            self.value(b).data(),
            &geom,
        );
        Ok(self.push(
            out,
            Op::Conv {
                x,
                w,
                b,
                geom,
                kind: ConvKind::DepthwiseTranspose,
            },
            &[x, w, b],
        ))
    }

    /// Instance normalization with population variance over each `(n, c)` plane.
    pub fn instance_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        const OP: &str = "instance_norm";
        let xs = self.shape(x);
        let m = xs.plane();
        if m < 2 {
            return Err(Error::invalid(
                OP,
                format!("needs at least 2 spatial elements, input is {xs}"),
            ));
        }
        if !(eps > 0.0) {
            return Err(Error::invalid(
                OP,
                format!("eps must be positive, got {eps}"),
            ));
        }
        self.check_vector(OP, "gamma", gamma, xs.c)?;
        self.check_vector(OP, "beta", beta, xs.c)?;
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let input = self.value(x).data();
        let mut xhat = vec![0.0; input.len()];
        let mut inv_std = vec![0.0; xs.n * xs.c];
        let mut out = vec![0.0; input.len()];
        for (i, ((src, xh), dst)) in input
            .chunks(m)
            .zip(xhat.chunks_mut(m))
            .zip(out.chunks_mut(m))
            .enumerate()
        {
            let c = i % xs.c;
            let mean = src.iter().sum::<f64>() / m as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for ((v, h), o) in src.iter().zip(xh.iter_mut()).zip(dst.iter_mut()) {
                *h = (v - mean) * is;
                *o = g[c] * *h + bt[c];
            }
        }
        let out = Tensor::from_vec(xs, out)?;
        Ok(self.push(
            out,
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(out, Op::LeakyRelu(x, slope), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(out, Op::Tanh(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape {
                op: "add",
                lhs_name: "lhs",
                lhs: sa,
                rhs_name: "rhs",
                rhs: sb,
            });
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let out = self.value(x).map(|v| k * v);
        self.push(out, Op::Scale(x, k), &[x])
    }

    /// Concatenates along the channel axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
            return Err(Error::Shape {
                op: "concat_channels",
                lhs_name: "lhs",
                lhs: sa,
                rhs_name: "rhs",
                rhs: sb,
            });
        }
        let mut data = Vec::with_capacity(sa.numel() + sb.numel());
        for n in 0..sa.n {
            data.extend_from_slice(self.value(a).sample(n));
            data.extend_from_slice(self.value(b).sample(n));
        }
        let out = Tensor::from_vec(Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w), data)?;
        Ok(self.push(out, Op::ConcatChannels(a, b), &[a, b]))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = Tensor::scalar(v.sum() / v.numel() as f64);
        self.push(out, Op::Mean(x), &[x])
    }

    /// Mean absolute difference.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape {
                op: "l1",
                lhs_name: "lhs",
                lhs: sa,
                rhs_name: "rhs",
                rhs: sb,
            });
        }
        let (va, vb) = (self.value(a).data(), self.value(b).data());
        let s: f64 = va.iter().zip(vb).map(|(x, y)| (x - y).abs()).sum();
        let out = Tensor::scalar(s / va.len() as f64);
        Ok(self.push(out, Op::L1(a, b), &[a, b]))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against a constant
    /// target, evaluated as `max(x, 0) - x t + ln(1 + e^-|x|)`.
    pub fn bce_with_logits(&mut self, logits: Var, target: f64) -> Var {
        let v = self.value(logits).data();
        let s: f64 = v
            .iter()
            .map(|&x| x.max(0.0) - x * target + (-x.abs()).exp().ln_1p())
            .sum();
        let out = Tensor::scalar(s / v.len() as f64);
        self.push(out, Op::BceWithLogits(logits, target), &[logits])
    }

    /// Mean softmax cross-entropy over the batch. `logits` is `(n, classes, 1, 1)`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.shape(logits);
        if s.h != 1 || s.w != 1 || labels.len() != s.n {
            return Err(Error::invalid(
                "softmax_cross_entropy",
                format!("logits {s} with {} labels", labels.len()),
            ));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= s.c) {
            return Err(Error::Label {
                label,
                num_domains: s.c,
            });
        }
        let v = self.value(logits).data();
        let mut probs = vec![0.0; v.len()];
        let mut total = 0.0;
        for ((row, p), &label) in v.chunks(s.c).zip(probs.chunks_mut(s.c)).zip(labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let lse = max + z.ln();
            total += lse - row[label];
            for (pi, x) in p.iter_mut().zip(row) {
                *pi = (x - lse).exp();
            }
        }
        let out = Tensor::scalar(total / s.n as f64);
        Ok(self.push(
            out,
            Op::SoftmaxCrossEntropy {
                x: logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Backpropagates from a scalar `loss`. Leaf gradients accumulate across
    /// calls until [`Tape::zero_grad`]; every leaf that requires a gradient
    /// ends up with one, zeros if the loss does not depend on it.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let ls = self.shape(loss);
        if ls.numel() != 1 {
            return Err(Error::invalid(
                "backward",
                format!("loss must be scalar, got {ls}"),
            ));
        }
        for n in &mut self.nodes {
            if !matches!(n.op, Op::Leaf) {
                n.grad = None;
            }
        }
        if self.nodes[loss.0].requires_grad {
            self.accumulate(loss, Tensor::scalar(1.0));
        }
        for i in (0..=loss.0).rev() {
            if matches!(self.nodes[i].op, Op::Leaf) || !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            for (v, gv) in self.vjp(i, &g) {
                self.accumulate(v, gv);
            }
        }
        for n in &mut self.nodes {
            if n.requires_grad && matches!(n.op, Op::Leaf) && n.grad.is_none() {
                n.grad = Some(Tensor::zeros(n.value.shape()));
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor) {
        let node = &mut self.nodes[v.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(acc) => acc.add_assign(&g),
            None => node.grad = Some(g),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Vector-Jacobian product of node `i` with upstream gradient `g`.
    fn vjp(&self, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let mut out = Vec::with_capacity(3);
        match &node.op {
            Op::Leaf => {}
            Op::Conv {
                x,
                w,
                b,
                geom,
                kind,
            } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (need_dx, need_dw) = (self.wants(*x), self.wants(*w));
                let ConvGrads { dx, dw, db } = match kind {
                    ConvKind::Dense => kernels::conv2d_backward(xv, wv, g, geom, need_dx, need_dw),
                    ConvKind::DenseTranspose => {
                        kernels::conv_transpose2d_backward(xv, wv, g, geom, need_dx, need_dw)
                    }
                    ConvKind::Depthwise => {
                        kernels::depthwise_backward(xv, wv, g, geom, need_dx, need_dw)
                    }
                    ConvKind::DepthwiseTranspose => {
                        kernels::depthwise_transpose_backward(xv, wv, g, geom, need_dx, need_dw)
                    }
                };
                if let Some(dx) = dx {
                    out.push((*x, dx));
                }
                if let Some(dw) = dw {
                    out.push((*w, dw));
                }
                if self.wants(*b) {
                    let bs = self.shape(*b);
                    out.push((*b, Tensor::from_vec(bs, db).expect("bias grad")));
                }
            }
            Op::InstanceNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let s = self.shape(*x);
                let m = s.plane();
                let gm = self.value(*gamma).data();
                let mut dgamma = vec![0.0; s.c];
                let mut dbeta = vec![0.0; s.c];
                let mut dx = vec![0.0; s.numel()];
                for (idx, ((gr, xh), d)) in g
                    .data()
                    .chunks(m)
                    .zip(xhat.chunks(m))
                    .zip(dx.chunks_mut(m))
                    .enumerate()
                {
                    let c = idx % s.c;
                    let sum_g: f64 = gr.iter().sum();
                    let sum_gx: f64 = gr.iter().zip(xh).map(|(a, b)| a * b).sum();
                    dgamma[c] += sum_gx;
                    dbeta[c] += sum_g;
                    // dx = gamma * inv_std / m * (m g - sum g - xhat sum(g xhat))
                    let k = gm[c] * inv_std[idx] / m as f64;
                    for ((di, gi), xi) in d.iter_mut().zip(gr).zip(xh) {
                        *di = k * (m as f64 * gi - sum_g - xi * sum_gx);
                    }
                }
                if self.wants(*x) {
                    out.push((*x, Tensor::from_vec(s, dx).expect("dx")));
                }
                if self.wants(*gamma) {
                    out.push((
                        *gamma,
                        Tensor::from_vec(self.shape(*gamma), dgamma).expect("dgamma"),
                    ));
                }
                if self.wants(*beta) {
                    out.push((
                        *beta,
                        Tensor::from_vec(self.shape(*beta), dbeta).expect("dbeta"),
                    ));
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let d = g
                    .data()
                    .iter()
                    .zip(xv)
                    .map(|(gi, &v)| if v > 0.0 { *gi } else { 0.0 });
                out.push((*x, Tensor::from_vec(g.shape(), d.collect()).expect("relu")));
            }
            Op::LeakyRelu(x, slope) => {
                let xv = self.value(*x).data();
                let d = g
                    .data()
                    .iter()
                    .zip(xv)
                    .map(|(gi, &v)| if v > 0.0 { *gi } else { slope * gi });
                out.push((
                    *x,
                    Tensor::from_vec(g.shape(), d.collect()).expect("leaky_relu"),
                ));
            }
            Op::Tanh(x) => {
                let yv = node.value.data();
                let d = g.data().iter().zip(yv).map(|(gi, y)| gi * (1.0 - y * y));
                out.push((*x, Tensor::from_vec(g.shape(), d.collect()).expect("tanh")));
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    out.push((*a, g.clone()));
                }
                if self.wants(*b) {
                    out.push((*b, g.clone()));
                }
            }
            Op::Scale(x, k) => out.push((*x, g.map(|v| k * v))),
            Op::ConcatChannels(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (la, lb) = (sa.sample_len(), sb.sample_len());
                let mut ga = Vec::with_capacity(sa.numel());
                let mut gb = Vec::with_capacity(sb.numel());
                for chunk in g.data().chunks(la + lb) {
                    ga.extend_from_slice(&chunk[..la]);
                    gb.extend_from_slice(&chunk[la..]);
                }
                if self.wants(*a) {
                    out.push((*a, Tensor::from_vec(sa, ga).expect("concat a")));
                }
                if self.wants(*b) {
                    out.push((*b, Tensor::from_vec(sb, gb).expect("concat b")));
                }
            }
            Op::Mean(x) => {
                let s = self.shape(*x);
                out.push((*x, Tensor::full(s, g.item() / s.numel() as f64)));
            }
            Op::L1(a, b) => {
                let s = self.shape(*a);
                let k = g.item() / s.numel() as f64;
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let sign: Vec<f64> = va
                    .iter()
                    .zip(vb)
                    .map(|(x, y)| {
                        let d = x - y;
                        if d > 0.0 {
                            k
                        } else if d < 0.0 {
                            -k
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if self.wants(*b) {
                    out.push((
                        *b,
                        Tensor::from_vec(s, sign.iter().map(|v| -v).collect()).expect("l1 b"),
                    ));
                }
                if self.wants(*a) {
                    out.push((*a, Tensor::from_vec(s, sign).expect("l1 a")));
                }
            }
            Op::BceWithLogits(x, target) => {
                let s = self.shape(*x);
                let k = g.item() / s.numel() as f64;
                out.push((*x, self.value(*x).map(|v| k * (sigmoid(v) - target))));
            }
            Op::SoftmaxCrossEntropy { x, labels, probs } => {
                let s = self.shape(*x);
                let k = g.item() / s.n as f64;
                let mut d: Vec<f64> = probs.iter().map(|p| k * p).collect();
                for (n, &l) in labels.iter().enumerate() {
                    d[n * s.c + l] -= k;
                }
                out.push((*x, Tensor::from_vec(s, d).expect("ce")));
            }
        }
        out
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
