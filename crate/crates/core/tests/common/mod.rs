//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use sepgan::layers::LayerSpec;
use sepgan::models::{ModelConfig, Scale, Variant};
use sepgan::params::Parameters;
use sepgan::{Rng, Shape, Tape, Tensor, Var};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely. Rounding in an
/// order-one loss leaves about 1e-10 of noise in a difference quotient.
pub const FD_FLOOR: f64 = 1e-5;

pub fn randn(shape: impl Into<Shape>, rng: &mut Rng) -> Tensor {
    let s = shape.into();
    Tensor::from_vec(s, (0..s.numel()).map(|_| rng.normal()).collect()).unwrap()
}

pub fn uniform(shape: impl Into<Shape>, lo: f64, hi: f64, rng: &mut Rng) -> Tensor {
    let s = shape.into();
    Tensor::from_vec(
        s,
        (0..s.numel()).map(|_| rng.uniform_range(lo, hi)).collect(),
    )
    .unwrap()
}

/// Outcome of a finite-difference comparison.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradCheck {
    /// Worst relative error over the probed elements.
    pub worst: f64,
    pub probed: usize,
    /// Probes redrawn because every step tried crossed a kink of a
    /// piecewise-linear op, where central differences do not estimate the
    /// derivative.
    pub redrawn: usize,
    /// Probes given up on after 20 redraws, or kinked elements of small
    /// inputs that are checked exhaustively.
    pub skipped: usize,
}

/// Central difference of element `j` of input `i`, shrinking the step up to
/// twice when the interval crosses a kink. `None` if it always does.
fn smooth_difference(
    eval: &dyn Fn(&[Tensor]) -> (f64, Vec<bool>),
    inputs: &[Tensor],
    base: &[bool],
    i: usize,
    j: usize,
    step: f64,
) -> Option<f64> {
    [step, step / 4.0, step / 16.0].into_iter().find_map(|h| {
        let mut vals = inputs.to_vec();
        vals[i].data_mut()[j] += h;
        let (up, kinks_up) = eval(&vals);
        vals[i].data_mut()[j] -= 2.0 * h;
        let (down, kinks_down) = eval(&vals);
        (kinks_up == base && kinks_down == base).then(|| (up - down) / (2.0 * h))
    })
}

/// Compares reverse-mode and central-difference gradients of `f` with
/// respect to every input. Each input is probed at its largest analytic
/// gradient plus `probes` elements chosen by `rng` (every element when it
/// has no more than `probes`).
pub fn grad_check(
    inputs: &[Tensor],
    probes: usize,
    rng: &mut Rng,
    f: &dyn Fn(&mut Tape, &[Var]) -> Var,
) -> GradCheck {
    grad_check_step(inputs, probes, rng, FD_STEP, f)
}

pub fn grad_check_step(
    inputs: &[Tensor],
    probes: usize,
    rng: &mut Rng,
    step: f64,
    f: &dyn Fn(&mut Tape, &[Var]) -> Var,
) -> GradCheck {
    // leaves keep the op records that kink_pattern reads
    let eval = |vals: &[Tensor]| -> (f64, Vec<bool>) {
        let mut t = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| t.leaf(v.clone(), true)).collect();
        let out = f(&mut t, &vars);
        (t.value(out).item(), t.kink_pattern())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.leaf(v.clone(), true)).collect();
    let out = f(&mut tape, &vars);
    let base = tape.kink_pattern();
    tape.backward(out).unwrap();
    let mut report = GradCheck::default();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = tape.grad_or_zeros(vars[i]);
        let n = input.numel();
        let exhaustive = n <= probes;
        let picks: Vec<usize> = if exhaustive {
            (0..n).collect()
        } else {
            let largest = (0..n)
                .max_by(|&a, &b| {
                    analytic.data()[a]
                        .abs()
                        .total_cmp(&analytic.data()[b].abs())
                })
                .unwrap_or(0);
            std::iter::once(largest)
                .chain((0..probes).map(|_| rng.below(n)))
                .collect()
        };
        for mut j in picks {
            let mut tries = 0;
            loop {
                match smooth_difference(&eval, inputs, &base, i, j, step) {
                    Some(numeric) => {
                        let a = analytic.data()[j];
                        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
                        report.worst = report.worst.max(err);
                        report.probed += 1;
                        break;
                    }
                    None if exhaustive || tries == 20 => {
                        report.skipped += 1;
                        break;
                    }
                    None => {
                        report.redrawn += 1;
                        tries += 1;
                        j = rng.below(n);
                    }
                }
            }
        }
    }
    report
}

/// Smooth scalar read-out used to turn feature maps into losses: a
/// random 1x1 projection to one channel followed by mean BCE.
pub fn readout(t: &mut Tape, y: Var, rng_seed: u64) -> Var {
    let c = t.shape(y).c;
    let mut rng = Rng::new(rng_seed);
    let w = t.constant(randn([1, c, 1, 1], &mut rng));
    let b = t.constant(Tensor::vector(vec![0.1]));
    let z = t.pointwise_conv2d(y, w, b).unwrap();
    t.bce_with_logits(z, 0.3)
}

/// Allocates a block's parameters and perturbs every tensor, so norm
/// affines and biases are not at their identity values.
pub fn block_params(spec: &LayerSpec, rng: &mut Rng) -> Vec<Tensor> {
    let mut p = Parameters::new();
    spec.init_params("b", &mut p, rng);
    p.tensors()
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v += 0.3 * rng.normal());
            t
        })
        .collect()
}

/// 16x16, width-4 version of the desk preset for fast end-to-end tests.
pub fn tiny_model(v: Variant) -> ModelConfig {
    let mut m = ModelConfig::preset(Scale::Desk, v);
    m.image_size = 16;
    m.base_channels = 4;
    m.n_bottleneck = 1;
    m.deep_std_blocks = 1;
    m.deep_sep_blocks = 2;
    m.d_repeat = 2;
    m.d_sep_blocks = 1;
    m
}

/// Prints and records one acceptance line.
pub struct Report {
    failures: Vec<String>,
}

impl Report {
    pub fn new() -> Self {
        Report {
            failures: Vec::new(),
        }
    }

    pub fn check(&mut self, criterion: &str, pass: bool, detail: impl AsRef<str>) {
        println!(
            "{} {criterion}: {}",
            if pass { "PASS" } else { "FAIL" },
            detail.as_ref()
        );
        if !pass {
            self.failures
                .push(format!("{criterion}: {}", detail.as_ref()));
        }
    }

    pub fn failed(&self) -> usize {
        self.failures.len()
    }
}
