//! Convolution blocks shared by every model variant.
//!
//! A separable block is one depthwise convolution (which carries the stride)
//! followed by one pointwise convolution. Normalization and activation are
//! applied after the pointwise stage only.

use std::fmt;

use crate::error::{Error, Result};
use crate::params::Parameters;
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::{Shape, Tensor};

pub const NORM_EPS: f64 = 1e-5;
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    StdConv,
    SepConv,
    ConvTranspose,
    SepConvTranspose,
    Residual,
    SepResidual,
}

impl LayerKind {
    pub fn is_separable(self) -> bool {
        matches!(
            self,
            LayerKind::SepConv | LayerKind::SepConvTranspose | LayerKind::SepResidual
        )
    }

    pub fn is_transposed(self) -> bool {
        matches!(self, LayerKind::ConvTranspose | LayerKind::SepConvTranspose)
    }

    pub fn is_residual(self) -> bool {
        matches!(self, LayerKind::Residual | LayerKind::SepResidual)
    }

    /// The separable counterpart of a standard kind, and vice versa.
    pub fn swapped(self) -> LayerKind {
        match self {
            LayerKind::StdConv => LayerKind::SepConv,
            LayerKind::SepConv => LayerKind::StdConv,
            LayerKind::ConvTranspose => LayerKind::SepConvTranspose,
            LayerKind::SepConvTranspose => LayerKind::ConvTranspose,
            LayerKind::Residual => LayerKind::SepResidual,
            LayerKind::SepResidual => LayerKind::Residual,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::StdConv => "std_conv",
            LayerKind::SepConv => "sep_conv",
            LayerKind::ConvTranspose => "conv_transpose",
            LayerKind::SepConvTranspose => "sep_conv_transpose",
            LayerKind::Residual => "residual",
            LayerKind::SepResidual => "sep_residual",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    InstanceNorm,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    ReLU,
    LeakyReLU(f64),
    Tanh,
    None,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::ReLU => tape.relu(x),
            Activation::LeakyReLU(s) => tape.leaky_relu(x, s),
            Activation::Tanh => tape.tanh(x),
            Activation::None => x,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// `floor((k - 1) / 2)` zeros on each side.
    Same,
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Convolution weights, counted in `params_w`.
    Weight,
    Bias,
    NormScale,
    NormShift,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    pub kind: ParamKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub norm: Norm,
    pub activation: Activation,
    pub padding: Padding,
}

impl LayerSpec {
    pub fn new(
        kind: LayerKind,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        LayerSpec {
            kind,
            in_channels,
            out_channels,
            kernel,
            stride,
            norm: Norm::InstanceNorm,
            activation: Activation::ReLU,
            padding: Padding::Same,
        }
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_norm(mut self, norm: Norm) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    /// `floor((k - 1) / 2)`: "same" padding for odd kernels, and exact
    /// halving/doubling for `k = 4, stride = 2`.
    pub fn padding(&self) -> usize {
        match self.padding {
            Padding::Same => (self.kernel - 1) / 2,
            Padding::Valid => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "LayerSpec";
        if self.in_channels == 0 || self.out_channels == 0 || self.kernel == 0 || self.stride == 0 {
            return Err(Error::invalid(
                OP,
                format!("channels, kernel and stride must be positive: {self:?}"),
            ));
        }
        if self.kind.is_residual()
            && (self.in_channels != self.out_channels || self.stride != 1 || self.kernel.is_multiple_of(2))
        {
            return Err(Error::invalid(
                OP,
                format!(
                    "residual blocks need in_channels == out_channels, stride 1 and an odd kernel, got {} -> {} k {} stride {}",
                    self.in_channels, self.out_channels, self.kernel, self.stride
                ),
            ));
        }
        Ok(())
    }

    /// Output spatial size for an `h x w` input, if the kernel fits.
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (k, s, p) = (self.kernel, self.stride, self.padding());
        if self.kind.is_transposed() {
            let oh = ((h.checked_sub(1)?) * s + k).checked_sub(2 * p)?;
            let ow = ((w.checked_sub(1)?) * s + k).checked_sub(2 * p)?;
            Some((oh, ow))
        } else {
            if h + 2 * p < k || w + 2 * p < k {
                return None;
            }
            Some(((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1))
        }
    }

    /// Learnable tensors of this block, in allocation order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let (ci, co, k) = (self.in_channels, self.out_channels, self.kernel);
        let mut out = Vec::new();
        let mut push = |name: &str, shape: [usize; 4], kind| {
            out.push(ParamSpec {
                name: name.to_string(),
                shape: shape.into(),
                kind,
            })
        };
        let norm = self.norm == Norm::InstanceNorm;
        match self.kind {
            LayerKind::StdConv => {
                push("weight", [co, ci, k, k], ParamKind::Weight);
                push("bias", [1, co, 1, 1], ParamKind::Bias);
            }
            LayerKind::ConvTranspose => {
                push("weight", [ci, co, k, k], ParamKind::Weight);
                push("bias", [1, co, 1, 1], ParamKind::Bias);
            }
            LayerKind::SepConv | LayerKind::SepConvTranspose => {
                push("dw.weight", [ci, 1, k, k], ParamKind::Weight);
                push("dw.bias", [1, ci, 1, 1], ParamKind::Bias);
                push("pw.weight", [co, ci, 1, 1], ParamKind::Weight);
                push("pw.bias", [1, co, 1, 1], ParamKind::Bias);
            }
            LayerKind::Residual | LayerKind::SepResidual => {
                let inner = self.residual_inner();
                for (prefix, spec) in [("conv1", inner[0]), ("conv2", inner[1])] {
                    for p in spec.param_specs() {
                        out.push(ParamSpec {
                            name: format!("{prefix}.{}", p.name),
                            ..p
                        });
                    }
                }
                return out;
            }
        }
        if norm {
            push("norm.gamma", [1, co, 1, 1], ParamKind::NormScale);
            push("norm.beta", [1, co, 1, 1], ParamKind::NormShift);
        }
        out
    }

    /// The two inner blocks of a residual block.
    fn residual_inner(&self) -> [LayerSpec; 2] {
        let kind = if self.kind == LayerKind::SepResidual {
            LayerKind::SepConv
        } else {
            LayerKind::StdConv
        };
        let first = LayerSpec {
            kind,
            stride: 1,
            ..*self
        };
        let second = first.with_activation(Activation::None);
        [first, second]
    }

    /// `(weights, biases + norm affine)` scalar counts.
    pub fn param_count(&self) -> (usize, usize) {
        self.param_specs().iter().fold((0, 0), |(w, o), p| {
            if p.kind == ParamKind::Weight {
                (w + p.shape.numel(), o)
            } else {
                (w, o + p.shape.numel())
            }
        })
    }

    /// Allocates this block's parameters into `params` under `prefix`.
    pub fn init_params(&self, prefix: &str, params: &mut Parameters, rng: &mut Rng) -> usize {
        let mut first = None;
        for p in self.param_specs() {
            let t = match p.kind {
                ParamKind::Weight => {
                    let data = (0..p.shape.numel())
                        .map(|_| INIT_STD * rng.normal())
                        .collect();
                    Tensor::from_vec(p.shape, data).expect("param shape")
                }
                ParamKind::Bias | ParamKind::NormShift => Tensor::zeros(p.shape),
                ParamKind::NormScale => Tensor::full(p.shape, 1.0),
            };
            let idx = params.push(format!("{prefix}.{}", p.name), t);
            first.get_or_insert(idx);
        }
        first.unwrap_or(params.len())
    }

    pub fn param_len(&self) -> usize {
        self.param_specs().len()
    }

    /// Runs the block. `params` are this block's bound parameters in
    /// [`LayerSpec::param_specs`] order.
    pub fn forward(&self, tape: &mut Tape, x: Var, params: &[Var]) -> Result<Var> {
        if params.len() != self.param_len() {
            return Err(Error::invalid(
                "LayerSpec::forward",
                format!(
                    "{} expects {} parameters, got {}",
                    self.kind,
                    self.param_len(),
                    params.len()
                ),
            ));
        }
        match self.kind {
            LayerKind::StdConv => std_conv_block(tape, x, self, params),
            LayerKind::SepConv => sep_conv_block(tape, x, self, params),
            LayerKind::ConvTranspose => conv_transpose_block(tape, x, self, params),
            LayerKind::SepConvTranspose => sep_conv_transpose_block(tape, x, self, params),
            LayerKind::Residual | LayerKind::SepResidual => residual_block(tape, x, self, params),
        }
    }
}

fn finish(tape: &mut Tape, y: Var, spec: &LayerSpec, norm_params: &[Var]) -> Result<Var> {
    let y = match spec.norm {
        Norm::InstanceNorm => tape.instance_norm(y, norm_params[0], norm_params[1], NORM_EPS)?,
        Norm::None => y,
    };
    Ok(spec.activation.apply(tape, y))
}

fn expect_kind(spec: &LayerSpec, kind: LayerKind, op: &'static str) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::invalid(
            op,
            format!("expected {kind}, got {}", spec.kind),
        ));
    }
    Ok(())
}

/// conv -> norm -> activation.
pub fn std_conv_block(tape: &mut Tape, x: Var, spec: &LayerSpec, p: &[Var]) -> Result<Var> {
    expect_kind(spec, LayerKind::StdConv, "std_conv_block")?;
    let y = tape.conv2d(x, p[0], p[1], spec.stride, spec.padding())?;
    finish(tape, y, spec, &p[2..])
}

/// depthwise (strided) -> pointwise -> norm -> activation.
pub fn sep_conv_block(tape: &mut Tape, x: Var, spec: &LayerSpec, p: &[Var]) -> Result<Var> {
    expect_kind(spec, LayerKind::SepConv, "sep_conv_block")?;
    let y = tape.depthwise_conv2d(x, p[0], p[1], spec.stride, spec.padding())?;
    let y = tape.pointwise_conv2d(y, p[2], p[3])?;
    finish(tape, y, spec, &p[4..])
}

pub fn conv_transpose_block(tape: &mut Tape, x: Var, spec: &LayerSpec, p: &[Var]) -> Result<Var> {
    expect_kind(spec, LayerKind::ConvTranspose, "conv_transpose_block")?;
    let y = tape.conv_transpose2d(x, p[0], p[1], spec.stride, spec.padding())?;
    finish(tape, y, spec, &p[2..])
}

/// depthwise transposed (strided) -> pointwise -> norm -> activation.
pub fn sep_conv_transpose_block(
    tape: &mut Tape,
    x: Var,
    spec: &LayerSpec,
    p: &[Var],
) -> Result<Var> {
    expect_kind(
        spec,
        LayerKind::SepConvTranspose,
        "sep_conv_transpose_block",
    )?;
    let y = tape.depthwise_conv_transpose2d(x, p[0], p[1], spec.stride, spec.padding())?;
    let y = tape.pointwise_conv2d(y, p[2], p[3])?;
    finish(tape, y, spec, &p[4..])
}

/// `x + f(x)`, where `f` is two conv blocks and the second has no activation.
pub fn residual_block(tape: &mut Tape, x: Var, spec: &LayerSpec, p: &[Var]) -> Result<Var> {
    if !spec.kind.is_residual() {
        return Err(Error::invalid(
            "residual_block",
            format!("expected a residual kind, got {}", spec.kind),
        ));
    }
    spec.validate()?;
    let [first, second] = spec.residual_inner();
    let split = first.param_len();
    let h = first.forward(tape, x, &p[..split])?;
    let h = second.forward(tape, h, &p[split..])?;
    tape.add(x, h)
}
