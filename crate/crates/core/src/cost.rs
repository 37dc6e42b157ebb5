//! Parameter and multiply-accumulate accounting.
//!
//! Weight parameters and MACs follow the convolution formulas; biases and
//! normalization affines are counted separately and cost no MACs.
//! Transposed convolutions are costed per input pixel, and the pointwise
//! half of a separable transposed block runs at the output resolution.

use std::fmt::Write as _;

use crate::error::Result;
use crate::layers::{LayerKind, LayerSpec};
use crate::models::{discriminator_plan, generator_plan, ModelConfig, Plan, Scale, Variant};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostRow {
    pub layer: String,
    pub kind: LayerKind,
    pub params_w: u64,
    pub params_other: u64,
    pub macs: u64,
}

fn conv_macs(spec: &LayerSpec, h: usize, w: usize) -> u64 {
    let (ci, co, k) = (
        spec.in_channels as u64,
        spec.out_channels as u64,
        spec.kernel as u64,
    );
    let (ho, wo) = spec.output_hw(h, w).unwrap_or((0, 0));
    let (hw_in, hw_out) = ((h * w) as u64, (ho * wo) as u64);
    match spec.kind {
        LayerKind::StdConv => hw_out * k * k * ci * co,
        LayerKind::SepConv => hw_out * k * k * ci + hw_out * ci * co,
        LayerKind::ConvTranspose => hw_in * k * k * ci * co,
        LayerKind::SepConvTranspose => hw_in * k * k * ci + hw_out * ci * co,
        LayerKind::Residual | LayerKind::SepResidual => {
            let inner = LayerSpec {
                kind: if spec.kind == LayerKind::Residual {
                    LayerKind::StdConv
                } else {
                    LayerKind::SepConv
                },
                stride: 1,
                ..*spec
            };
            2 * conv_macs(&inner, h, w)
        }
    }
}

/// Cost of one block on an `h x w` input.
pub fn layer_cost(name: &str, spec: &LayerSpec, h: usize, w: usize) -> CostRow {
    let (pw, po) = spec.param_count();
    CostRow {
        layer: name.to_string(),
        kind: spec.kind,
        params_w: pw as u64,
        params_other: po as u64,
        macs: conv_macs(spec, h, w),
    }
}

/// Separable over standard cost for one layer, `1/cout + 1/k^2`.
pub fn reduction_ratio(cin: usize, cout: usize, k: usize) -> f64 {
    let (ci, co, k2) = (cin as f64, cout as f64, (k * k) as f64);
    let ratio = (k2 * ci + ci * co) / (k2 * ci * co);
    debug_assert!((ratio - (1.0 / co + 1.0 / k2)).abs() <= 1e-15 * ratio.max(1.0));
    ratio
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Totals {
    pub params_w: u64,
    pub params_other: u64,
    pub macs: u64,
}

impl Totals {
    pub fn params(&self) -> u64 {
        self.params_w + self.params_other
    }
}

impl CostReport {
    pub fn totals(&self) -> Totals {
        self.rows.iter().fold(Totals::default(), |t, r| Totals {
            params_w: t.params_w + r.params_w,
            params_other: t.params_other + r.params_other,
            macs: t.macs + r.macs,
        })
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("layer,kind,params_w,params_other,macs\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{}",
                r.layer, r.kind, r.params_w, r.params_other, r.macs
            )
            .expect("string write");
        }
        let t = self.totals();
        writeln!(s, "total,,{},{},{}", t.params_w, t.params_other, t.macs).expect("string write");
        s
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<10} {:<20} {:>12} {:>12} {:>16}\n",
            "layer", "kind", "params_w", "params_other", "macs"
        );
        for r in &self.rows {
            writeln!(
                s,
                "{:<10} {:<20} {:>12} {:>12} {:>16}",
                r.layer,
                r.kind.as_str(),
                r.params_w,
                r.params_other,
                r.macs
            )
            .expect("string write");
        }
        let t = self.totals();
        writeln!(
            s,
            "{:<10} {:<20} {:>12} {:>12} {:>16}",
            "total", "", t.params_w, t.params_other, t.macs
        )
        .expect("string write");
        s
    }
}

pub fn model_cost(plan: &Plan) -> CostReport {
    CostReport {
        rows: plan
            .layers
            .iter()
            .map(|l| layer_cost(&l.name, &l.spec, l.in_h, l.in_w))
            .collect(),
    }
}

/// Published parameter count with its allowed relative deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Published {
    pub value: f64,
    pub tolerance: f64,
}

impl Published {
    pub fn check(&self, count: u64) -> bool {
        ((count as f64 - self.value) / self.value).abs() <= self.tolerance
    }
}

pub fn published_generator(v: Variant) -> Published {
    match v {
        Variant::Baseline => Published {
            value: 8.5e6,
            tolerance: 0.10,
        },
        Variant::DepthwiseG | Variant::DepthwiseDG => Published {
            value: 1.5e6,
            tolerance: 0.10,
        },
        Variant::DeeperDepthwiseG => Published {
            value: 5.6e6,
            tolerance: 0.15,
        },
    }
}

pub fn published_discriminator(v: Variant) -> Published {
    match v {
        Variant::DepthwiseDG => Published {
            value: 32e6,
            tolerance: 0.15,
        },
        _ => Published {
            value: 44e6,
            tolerance: 0.10,
        },
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountRow {
    pub variant: Variant,
    pub generator: u64,
    pub discriminator: u64,
    pub g_ok: bool,
    pub d_ok: bool,
    pub total_ok: bool,
}

impl CountRow {
    pub fn pass(&self) -> bool {
        self.g_ok && self.d_ok && self.total_ok
    }
}

/// Generator and discriminator totals of `variant` at the paper-scale
/// preset, checked against the published numbers. The combined total uses
/// the tighter of the two tolerances.
pub fn paper_count(variant: Variant) -> Result<CountRow> {
    let cfg = ModelConfig::preset(Scale::Paper, variant);
    let g = model_cost(&generator_plan(&cfg)?).totals().params();
    let d = model_cost(&discriminator_plan(&cfg)?).totals().params();
    let (pg, pd) = (
        published_generator(variant),
        published_discriminator(variant),
    );
    let total = Published {
        value: pg.value + pd.value,
        tolerance: pg.tolerance.min(pd.tolerance),
    };
    Ok(CountRow {
        variant,
        generator: g,
        discriminator: d,
        g_ok: pg.check(g),
        d_ok: pd.check(d),
        total_ok: total.check(g + d),
    })
}

pub fn count_table(rows: &[CountRow]) -> String {
    let mut s = format!(
        "{:<20} {:>12} {:>10} {:>12} {:>10}  {}\n",
        "variant", "generator", "published", "discrim.", "published", "result"
    );
    let m = |v: f64| format!("{:.1}M", v / 1e6);
    for r in rows {
        let (pg, pd) = (
            published_generator(r.variant),
            published_discriminator(r.variant),
        );
        writeln!(
            s,
            "{:<20} {:>12} {:>10} {:>12} {:>10}  {}",
            r.variant.as_str(),
            r.generator,
            format!("{}±{:.0}%", m(pg.value), pg.tolerance * 100.0),
            r.discriminator,
            format!("{}±{:.0}%", m(pd.value), pd.tolerance * 100.0),
            if r.pass() { "PASS" } else { "FAIL" }
        )
        .expect("string write");
    }
    s
}
