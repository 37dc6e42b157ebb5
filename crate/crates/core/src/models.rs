//! The four generator/discriminator pairs.
//!
//! | variant              | generator bottleneck                         | up path          | discriminator trunk        |
//! |----------------------|----------------------------------------------|------------------|----------------------------|
//! | `baseline`           | `n_bottleneck` standard residual blocks      | transposed conv  | standard                   |
//! | `depthwise-g`        | `n_bottleneck` separable residual blocks     | separable        | standard                   |
//! | `deeper-depthwise-g` | `deep_std_blocks` standard residual blocks, then `deep_sep_blocks` separable conv blocks | separable | standard |
//! | `depthwise-dg`       | as `depthwise-g`                             | separable        | first `d_sep_blocks` separable |
//!
//! Every generator starts with a 7x7 entry conv on the image concatenated
//! with the spatially tiled domain label, downsamples twice with stride-2
//! 4x4 convs, and ends with a 7x7 exit conv and `tanh`.
//!
//! Networks are described first as a [`Plan`] (layer specs plus input
//! sizes), which is all the cost accounting needs; parameters are only
//! allocated when a [`Generator`] or [`Discriminator`] is built from it.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::{Activation, LayerKind, LayerSpec, Norm, Padding};
use crate::params::Parameters;
use crate::rng::Rng;
use crate::tape::{Tape, Var};
use crate::tensor::{Shape, Tensor};

pub const DISCRIMINATOR_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    DepthwiseG,
    DeeperDepthwiseG,
    DepthwiseDG,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Baseline,
        Variant::DepthwiseG,
        Variant::DeeperDepthwiseG,
        Variant::DepthwiseDG,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::DepthwiseG => "depthwise-g",
            Variant::DeeperDepthwiseG => "deeper-depthwise-g",
            Variant::DepthwiseDG => "depthwise-dg",
        }
    }

    pub fn index(self) -> usize {
        Variant::ALL
            .iter()
            .position(|v| *v == self)
            .expect("listed")
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant {s:?}, expected one of baseline, depthwise-g, deeper-depthwise-g, depthwise-dg"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::Config(format!(
                "unknown scale {s:?}, expected desk or paper"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub image_size: usize,
    pub image_channels: usize,
    pub num_domains: usize,
    pub base_channels: usize,
    pub n_bottleneck: usize,
    pub deep_std_blocks: usize,
    pub deep_sep_blocks: usize,
    pub d_repeat: usize,
    pub d_sep_blocks: usize,
}

impl ModelConfig {
    /// Frozen preset for `scale`, see `presets/*.conf`.
    pub fn preset(scale: Scale, variant: Variant) -> Self {
        let mut cfg = crate::config::RunConfig::preset(scale).model;
        cfg.variant = variant;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.image_size == 0 || !self.image_size.is_multiple_of(4) {
            return bad(format!(
                "image_size {} must be divisible by 4 (two stride-2 stages)",
                self.image_size
            ));
        }
        if self.num_domains < 2 {
            return bad(format!(
                "num_domains must be at least 2, got {}",
                self.num_domains
            ));
        }
        if self.image_channels == 0 || self.base_channels == 0 {
            return bad("image_channels and base_channels must be positive".into());
        }
        if self.d_repeat == 0 || !self.image_size.is_multiple_of(1 << self.d_repeat) {
            return bad(format!(
                "image_size {} must be divisible by 2^d_repeat = {}",
                self.image_size,
                1usize << self.d_repeat.min(30)
            ));
        }
        if self.d_sep_blocks > self.d_repeat {
            return bad(format!(
                "d_sep_blocks {} exceeds d_repeat {}",
                self.d_sep_blocks, self.d_repeat
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlannedLayer {
    pub name: String,
    pub spec: LayerSpec,
    pub in_h: usize,
    pub in_w: usize,
}

/// Layer sequence of a network. For discriminators the last two layers
/// are the `src` and `cls` heads, both fed by the trunk output.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub layers: Vec<PlannedLayer>,
    pub heads: usize,
}

impl Plan {
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                let (w, o) = l.spec.param_count();
                w + o
            })
            .sum()
    }

    pub fn separable_convs(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l.spec.kind {
                LayerKind::SepConv | LayerKind::SepConvTranspose => 1,
                LayerKind::SepResidual => 2,
                _ => 0,
            })
            .sum()
    }
}

struct PlanBuilder {
    layers: Vec<PlannedLayer>,
    h: usize,
    w: usize,
}

impl PlanBuilder {
    fn push(&mut self, name: impl Into<String>, spec: LayerSpec) -> Result<()> {
        spec.validate()?;
        let name = name.into();
        let (h, w) = spec.output_hw(self.h, self.w).ok_or_else(|| {
            Error::Config(format!(
                "layer {name} does not fit a {}x{} input",
                self.h, self.w
            ))
        })?;
        self.layers.push(PlannedLayer {
            name,
            spec,
            in_h: self.h,
            in_w: self.w,
        });
        self.h = h;
        self.w = w;
        Ok(())
    }
}

pub fn generator_plan(cfg: &ModelConfig) -> Result<Plan> {
    cfg.validate()?;
    let b = cfg.base_channels;
    let mut p = PlanBuilder {
        layers: Vec::new(),
        h: cfg.image_size,
        w: cfg.image_size,
    };
    p.push(
        "entry",
        LayerSpec::new(
            LayerKind::StdConv,
            cfg.image_channels + cfg.num_domains,
            b,
            7,
            1,
        ),
    )?;
    p.push("down1", LayerSpec::new(LayerKind::StdConv, b, 2 * b, 4, 2))?;
    p.push(
        "down2",
        LayerSpec::new(LayerKind::StdConv, 2 * b, 4 * b, 4, 2),
    )?;

    let c = 4 * b;
    let res = |kind| LayerSpec::new(kind, c, c, 3, 1);
    let up_kind = match cfg.variant {
        Variant::Baseline => {
            for i in 0..cfg.n_bottleneck {
                p.push(format!("res{}", i + 1), res(LayerKind::Residual))?;
            }
            LayerKind::ConvTranspose
        }
        Variant::DepthwiseG | Variant::DepthwiseDG => {
            for i in 0..cfg.n_bottleneck {
                p.push(format!("res{}", i + 1), res(LayerKind::SepResidual))?;
            }
            LayerKind::SepConvTranspose
        }
        Variant::DeeperDepthwiseG => {
            for i in 0..cfg.deep_std_blocks {
                p.push(format!("res{}", i + 1), res(LayerKind::Residual))?;
            }
            for i in 0..cfg.deep_sep_blocks {
                p.push(format!("sep{}", i + 1), res(LayerKind::SepConv))?;
            }
            LayerKind::SepConvTranspose
        }
    };
    p.push("up1", LayerSpec::new(up_kind, c, 2 * b, 4, 2))?;
    p.push("up2", LayerSpec::new(up_kind, 2 * b, b, 4, 2))?;
    p.push(
        "exit",
        LayerSpec::new(LayerKind::StdConv, b, cfg.image_channels, 7, 1)
            .with_norm(Norm::None)
            .with_activation(Activation::Tanh),
    )?;
    Ok(Plan {
        layers: p.layers,
        heads: 0,
    })
}

pub fn discriminator_plan(cfg: &ModelConfig) -> Result<Plan> {
    cfg.validate()?;
    let mut p = PlanBuilder {
        layers: Vec::new(),
        h: cfg.image_size,
        w: cfg.image_size,
    };
    let mut c_in = cfg.image_channels;
    let mut c_out = cfg.base_channels;
    for i in 0..cfg.d_repeat {
        let kind = if cfg.variant == Variant::DepthwiseDG && i < cfg.d_sep_blocks {
            LayerKind::SepConv
        } else {
            LayerKind::StdConv
        };
        let spec = LayerSpec::new(kind, c_in, c_out, 4, 2)
            .with_norm(Norm::None)
            .with_activation(Activation::LeakyReLU(DISCRIMINATOR_SLOPE));
        p.push(format!("trunk{}", i + 1), spec)?;
        c_in = c_out;
        c_out *= 2;
    }
    let (h, w) = (p.h, p.w);
    let head = |c_out, k| {
        LayerSpec::new(LayerKind::StdConv, c_in, c_out, k, 1)
            .with_norm(Norm::None)
            .with_activation(Activation::None)
    };
    p.push("src", head(1, 3))?;
    // both heads read the trunk output
    p.h = h;
    p.w = w;
    p.push("cls", head(cfg.num_domains, h).with_padding(Padding::Valid))?;
    Ok(Plan {
        layers: p.layers,
        heads: 2,
    })
}

#[derive(Clone, Debug)]
struct Layer {
    name: String,
    spec: LayerSpec,
    first: usize,
    len: usize,
}

fn instantiate(plan: &Plan, prefix: &str, rng: &mut Rng) -> (Vec<Layer>, Parameters) {
    let mut params = Parameters::new();
    let layers = plan
        .layers
        .iter()
        .map(|pl| {
            let first = params.len();
            pl.spec
                .init_params(&format!("{prefix}.{}", pl.name), &mut params, rng);
            Layer {
                name: pl.name.clone(),
                spec: pl.spec,
                first,
                len: params.len() - first,
            }
        })
        .collect();
    (layers, params)
}

impl Layer {
    fn run(&self, tape: &mut Tape, x: Var, bound: &[Var]) -> Result<Var> {
        self.spec
            .forward(tape, x, &bound[self.first..self.first + self.len])
    }
}

/// `(n, num_domains, 1, 1)` one-hot label vectors.
pub fn one_hot(labels: &[usize], num_domains: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros([labels.len(), num_domains, 1, 1]);
    for (n, &l) in labels.iter().enumerate() {
        if l >= num_domains {
            return Err(Error::Label {
                label: l,
                num_domains,
            });
        }
        t.set(n, l, 0, 0, 1.0);
    }
    Ok(t)
}

fn tile_labels(c: &Tensor, h: usize, w: usize) -> Tensor {
    let s = c.shape();
    let mut out = Tensor::zeros([s.n, s.c, h, w]);
    for (dst, &v) in out.data_mut().chunks_mut(h * w).zip(c.data()) {
        dst.fill(v);
    }
    out
}

#[derive(Clone, Debug)]
pub struct Generator {
    config: ModelConfig,
    plan: Plan,
    layers: Vec<Layer>,
    params: Parameters,
}

impl Generator {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        let plan = generator_plan(&config)?;
        let (layers, params) = instantiate(&plan, "g", rng);
        Ok(Generator {
            config,
            plan,
            layers,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }

    pub fn layer_names(&self) -> impl Iterator<Item = &str> {
        self.layers.iter().map(|l| l.name.as_str())
    }

    fn check_input(&self, xs: Shape, cs: Shape) -> Result<()> {
        let cfg = &self.config;
        let expected = Shape::new(xs.n, cfg.image_channels, cfg.image_size, cfg.image_size);
        if xs != expected {
            return Err(Error::Shape {
                op: "generate",
                lhs_name: "image",
                lhs: xs,
                rhs_name: "expected",
                rhs: expected,
            });
        }
        if cs != Shape::new(xs.n, cfg.num_domains, 1, 1) {
            return Err(Error::Shape {
                op: "generate",
                lhs_name: "label",
                lhs: cs,
                rhs_name: "expected",
                rhs: Shape::new(xs.n, cfg.num_domains, 1, 1),
            });
        }
        Ok(())
    }

    /// `G(x, c)` on `tape`. `c` is `(n, num_domains, 1, 1)`, one-hot or multi-hot.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var, c: &Tensor) -> Result<Var> {
        let xs = tape.shape(x);
        self.check_input(xs, c.shape())?;
        let labels = tape.constant(tile_labels(c, xs.h, xs.w));
        let mut h = tape.concat_channels(x, labels)?;
        for layer in &self.layers {
            h = layer.run(tape, h, bound)?;
        }
        Ok(h)
    }

    /// Inference-only translation of `x` to labels `c`.
    pub fn generate(&self, x: &Tensor, c: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, &bound, xv, c)?;
        Ok(tape.value(y).clone())
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    config: ModelConfig,
    plan: Plan,
    layers: Vec<Layer>,
    params: Parameters,
}

impl Discriminator {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        let plan = discriminator_plan(&config)?;
        let (layers, params) = instantiate(&plan, "d", rng);
        Ok(Discriminator {
            config,
            plan,
            layers,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn params(&self) -> &Parameters {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }

    /// Trunk output before the heads.
    pub fn features(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var> {
        let cfg = &self.config;
        let xs = tape.shape(x);
        let expected = Shape::new(xs.n, cfg.image_channels, cfg.image_size, cfg.image_size);
        if xs != expected {
            return Err(Error::Shape {
                op: "discriminate",
                lhs_name: "image",
                lhs: xs,
                rhs_name: "expected",
                rhs: expected,
            });
        }
        let trunk = self.layers.len() - 2;
        let mut h = x;
        for layer in &self.layers[..trunk] {
            h = layer.run(tape, h, bound)?;
        }
        Ok(h)
    }

    /// Returns the patch logit map `(n, 1, h', w')` and domain logits
    /// `(n, num_domains, 1, 1)`, both raw.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<(Var, Var)> {
        let h = self.features(tape, bound, x)?;
        let n = self.layers.len();
        let src = self.layers[n - 2].run(tape, h, bound)?;
        let cls = self.layers[n - 1].run(tape, h, bound)?;
        Ok((src, cls))
    }

    pub fn discriminate(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let (src, cls) = self.forward(&mut tape, &bound, xv)?;
        Ok((tape.value(src).clone(), tape.value(cls).clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk(v: Variant) -> ModelConfig {
        ModelConfig::preset(Scale::Desk, v)
    }

    fn images(n: usize, size: usize, rng: &mut Rng) -> Tensor {
        let s = Shape::new(n, 3, size, size);
        Tensor::from_vec(
            s,
            (0..s.numel())
                .map(|_| rng.uniform_range(-1.0, 1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("stargan".parse::<Variant>().is_err());
    }

    #[test]
    fn generator_preserves_shape_and_range() {
        let mut rng = Rng::new(0);
        for v in Variant::ALL {
            let cfg = desk(v);
            let g = Generator::new(cfg, &mut rng).unwrap();
            let x = images(2, cfg.image_size, &mut rng);
            let c = one_hot(&[0, 1], cfg.num_domains).unwrap();
            let y = g.generate(&x, &c).unwrap();
            assert_eq!(y.shape(), x.shape(), "{v}");
            assert!(y.data().iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn discriminator_desk_shapes() {
        let mut rng = Rng::new(1);
        for v in Variant::ALL {
            let cfg = desk(v);
            let d = Discriminator::new(cfg, &mut rng).unwrap();
            let x = images(3, 32, &mut rng);
            let (src, cls) = d.discriminate(&x).unwrap();
            assert_eq!(src.shape(), Shape::new(3, 1, 4, 4));
            assert_eq!(cls.shape(), Shape::new(3, cfg.num_domains, 1, 1));
            assert!(src.all_finite() && cls.all_finite());
            let (src2, cls2) = d.discriminate(&x).unwrap();
            assert_eq!(src, src2);
            assert_eq!(cls, cls2);
        }
    }

    #[test]
    fn label_length_mismatch_is_rejected() {
        let cfg = desk(Variant::Baseline);
        let g = Generator::new(cfg, &mut Rng::new(0)).unwrap();
        let x = images(1, 32, &mut Rng::new(1));
        let c = Tensor::zeros([1, 3, 1, 1]);
        assert!(g.generate(&x, &c).is_err());
        assert!(one_hot(&[2], 2).is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = desk(Variant::Baseline);
        cfg.image_size = 30;
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("divisible by 4"));
        let mut cfg = desk(Variant::Baseline);
        cfg.num_domains = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn same_seed_same_init() {
        let cfg = desk(Variant::DeeperDepthwiseG);
        let a = Generator::new(cfg, &mut Rng::new(5)).unwrap();
        let b = Generator::new(cfg, &mut Rng::new(5)).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn plan_counts_match_allocation() {
        let mut rng = Rng::new(2);
        for v in Variant::ALL {
            let cfg = desk(v);
            let g = Generator::new(cfg, &mut rng).unwrap();
            assert_eq!(g.plan().param_count(), g.params().numel());
            let d = Discriminator::new(cfg, &mut rng).unwrap();
            assert_eq!(d.plan().param_count(), d.params().numel());
        }
    }

    #[test]
    fn deeper_generator_has_eleven_separable_convs() {
        for scale in [Scale::Desk, Scale::Paper] {
            let plan =
                generator_plan(&ModelConfig::preset(scale, Variant::DeeperDepthwiseG)).unwrap();
            assert_eq!(plan.separable_convs(), 11);
        }
    }

    #[test]
    fn generator_count_ordering() {
        for scale in [Scale::Desk, Scale::Paper] {
            let count = |v| {
                generator_plan(&ModelConfig::preset(scale, v))
                    .unwrap()
                    .param_count()
            };
            let (base, dg, deeper, ddg) = (
                count(Variant::Baseline),
                count(Variant::DepthwiseG),
                count(Variant::DeeperDepthwiseG),
                count(Variant::DepthwiseDG),
            );
            assert!(
                dg < deeper && deeper < base,
                "{scale:?}: {dg} {deeper} {base}"
            );
            assert_eq!(dg, ddg);
        }
    }
}
