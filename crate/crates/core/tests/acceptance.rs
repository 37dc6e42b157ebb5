//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 2 4`.

mod common;

use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use sepgan::checkpoint::Checkpoint;
use sepgan::cost::{layer_cost, paper_count, reduction_ratio};
use sepgan::data::{Dataset, DomainSpec};
use sepgan::fid::{frechet_distance, GaussianStats};
use sepgan::layers::{Activation, LayerKind, LayerSpec, Norm};
use sepgan::models::{one_hot, Generator, ModelConfig, Scale, Variant};
use sepgan::train::{
    adversarial_from_logits, adversarial_loss_terms, classification_losses, cross_entropy,
    reconstruction_loss, train_step_d, train_step_g, Gan, TrainConfig, Trainer,
};
use sepgan::{Rng, Tape, Tensor, Var};

use common::{
    block_params, grad_check, randn, readout, tiny_model, uniform, GradCheck, Report, FD_TOL,
};

type Outcome = (bool, String);

fn main() {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [(u32, &str, fn() -> Outcome); 8] = [
        (1, "parameter counts", counts),
        (2, "reduction-ratio identity", ratio_identity),
        (3, "gradient correctness", gradients),
        (4, "frechet distance", frechet),
        (5, "loss algebra", loss_algebra),
        (6, "desk-scale training trend", training_trend),
        (7, "determinism and persistence", persistence),
        (8, "separable factorization", factorization),
    ];
    let mut report = Report::new();
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = run();
        report.check(
            &format!("[{id}] {name}"),
            pass,
            format!("{detail} ({:.1} s)", start.elapsed().as_secs_f64()),
        );
    }
    if report.failed() > 0 {
        eprintln!("{} criteria failed", report.failed());
        std::process::exit(1);
    }
}

fn counts() -> Outcome {
    let start = Instant::now();
    let rows: Vec<_> = Variant::ALL
        .iter()
        .map(|&v| paper_count(v).expect("count"))
        .collect();
    let fast = start.elapsed().as_secs_f64() < 1.0;
    let detail = rows
        .iter()
        .map(|r| {
            format!(
                "{} G={} D={}",
                r.variant.as_str(),
                r.generator,
                r.discriminator
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    (rows.iter().all(|r| r.pass()) && fast, detail)
}

fn ratio_identity() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for k in [1, 3, 5, 7] {
        for ci in 1..=128 {
            for co in 1..=128 {
                let expected = 1.0 / co as f64 + 1.0 / (k * k) as f64;
                let std = layer_cost("s", &LayerSpec::new(LayerKind::StdConv, ci, co, k, 1), 8, 8);
                let sep = layer_cost("p", &LayerSpec::new(LayerKind::SepConv, ci, co, k, 1), 8, 8);
                let pr = sep.params_w as f64 / std.params_w as f64;
                let mr = sep.macs as f64 / std.macs as f64;
                for r in [pr, mr, reduction_ratio(ci, co, k)] {
                    worst = worst.max((r - expected).abs());
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst <= 1e-15 && secs < 10.0,
        format!("max deviation {worst:e} over 65536 shapes"),
    )
}

fn gradients() -> Outcome {
    const SEEDS: u64 = 20;
    let mut worst: Vec<(&'static str, GradCheck)> = Vec::new();
    let mut note =
        |label: &'static str, c: GradCheck| match worst.iter_mut().find(|(l, _)| *l == label) {
            Some((_, w)) => {
                w.worst = w.worst.max(c.worst);
                w.probed += c.probed;
                w.redrawn += c.redrawn;
                w.skipped += c.skipped;
            }
            None => worst.push((label, c)),
        };
    for seed in 0..SEEDS {
        for (label, c) in primitive_checks(seed) {
            note(label, c);
        }
        for (label, c) in block_checks(seed) {
            note(label, c);
        }
        note("desk generator", generator_check(seed));
    }
    let fails: Vec<String> = worst
        .iter()
        .filter(|(_, c)| !(c.worst <= FD_TOL))
        .map(|(l, c)| format!("{l} {:e}", c.worst))
        .collect();
    let max = worst.iter().map(|(_, c)| c.worst).fold(0.0, f64::max);
    let probed: usize = worst.iter().map(|(_, c)| c.probed).sum();
    let redrawn: usize = worst.iter().map(|(_, c)| c.redrawn).sum();
    let skipped: usize = worst.iter().map(|(_, c)| c.skipped).sum();
    if fails.is_empty() && skipped * 20 <= probed {
        (
            true,
            format!(
                "{} ops and blocks x {SEEDS} seeds, {probed} probes ({redrawn} redrawn and {skipped} skipped at kinks), max rel err {max:e}",
                worst.len()
            ),
        )
    } else {
        (
            false,
            format!(
                "over tolerance: [{}], {skipped} of {probed} probes skipped at kinks",
                fails.join(", ")
            ),
        )
    }
}

fn primitive_checks(seed: u64) -> Vec<(&'static str, GradCheck)> {
    let mut rng = Rng::with_stream(seed, 3);
    let r = &mut rng;
    let n = 1 + r.below(2);
    let ci = 1 + r.below(3);
    let co = 1 + r.below(3);
    let k = 1 + r.below(4);
    let stride = 1 + r.below(2);
    let pad = r.below(k.min(2) + 1).min(k - 1);
    let (h, w) = (k + 2 + r.below(3), k + 1 + r.below(3));
    let p = 6;
    let mut out = Vec::new();

    let x = randn([n, ci, h, w], r);
    let wt = randn([co, ci, k, k], r);
    let b = randn([1, co, 1, 1], r);
    out.push((
        "conv2d",
        grad_check(&[x.clone(), wt, b.clone()], p, r, &|t, v| {
            let y = t.conv2d(v[0], v[1], v[2], stride, pad).unwrap();
            readout(t, y, seed)
        }),
    ));
    let wt = randn([co, ci, 1, 1], r);
    out.push((
        "pointwise_conv2d",
        grad_check(&[x.clone(), wt, b.clone()], p, r, &|t, v| {
            let y = t.pointwise_conv2d(v[0], v[1], v[2]).unwrap();
            readout(t, y, seed)
        }),
    ));
    let wt = randn([ci, 1, k, k], r);
    let bc = randn([1, ci, 1, 1], r);
    out.push((
        "depthwise_conv2d",
        grad_check(&[x.clone(), wt.clone(), bc.clone()], p, r, &|t, v| {
            let y = t.depthwise_conv2d(v[0], v[1], v[2], stride, pad).unwrap();
            readout(t, y, seed)
        }),
    ));
    let xs = randn([n, ci, 3 + r.below(3), 3 + r.below(3)], r);
    out.push((
        "depthwise_conv_transpose2d",
        grad_check(&[xs.clone(), wt, bc], p, r, &|t, v| {
            let y = t
                .depthwise_conv_transpose2d(v[0], v[1], v[2], stride, pad)
                .unwrap();
            readout(t, y, seed)
        }),
    ));
    let wt = randn([ci, co, k, k], r);
    out.push((
        "conv_transpose2d",
        grad_check(&[xs, wt, b], p, r, &|t, v| {
            let y = t.conv_transpose2d(v[0], v[1], v[2], stride, pad).unwrap();
            readout(t, y, seed)
        }),
    ));
    let gamma = uniform([1, ci, 1, 1], 0.5, 1.5, r);
    let beta = randn([1, ci, 1, 1], r);
    out.push((
        "instance_norm",
        grad_check(&[x.clone(), gamma, beta], p, r, &|t, v| {
            let y = t.instance_norm(v[0], v[1], v[2], 1e-5).unwrap();
            readout(t, y, seed)
        }),
    ));
    out.push((
        "relu",
        grad_check(std::slice::from_ref(&x), p, r, &|t, v| {
            let y = t.relu(v[0]);
            readout(t, y, seed)
        }),
    ));
    out.push((
        "leaky_relu",
        grad_check(std::slice::from_ref(&x), p, r, &|t, v| {
            let y = t.leaky_relu(v[0], 0.01);
            readout(t, y, seed)
        }),
    ));
    out.push((
        "tanh",
        grad_check(std::slice::from_ref(&x), p, r, &|t, v| {
            let y = t.tanh(v[0]);
            readout(t, y, seed)
        }),
    ));
    let x2 = randn([n, ci, h, w], r);
    out.push((
        "add",
        grad_check(&[x.clone(), x2.clone()], p, r, &|t, v| {
            let y = t.add(v[0], v[1]).unwrap();
            readout(t, y, seed)
        }),
    ));
    let k_scale = r.uniform_range(-2.0, 2.0);
    out.push((
        "scale",
        grad_check(std::slice::from_ref(&x), p, r, &|t, v| {
            let y = t.scale(v[0], k_scale);
            readout(t, y, seed)
        }),
    ));
    let x3 = randn([n, co, h, w], r);
    out.push((
        "concat_channels",
        grad_check(&[x.clone(), x3], p, r, &|t, v| {
            let y = t.concat_channels(v[0], v[1]).unwrap();
            readout(t, y, seed)
        }),
    ));
    out.push((
        "mean",
        grad_check(std::slice::from_ref(&x), p, r, &|t, v| {
            let y = t.tanh(v[0]);
            t.mean(y)
        }),
    ));
    out.push((
        "l1",
        grad_check(&[x.clone(), x2], p, r, &|t, v| t.l1(v[0], v[1]).unwrap()),
    ));
    let target = r.uniform();
    out.push((
        "bce_with_logits",
        grad_check(&[x], p, r, &|t, v| t.bce_with_logits(v[0], target)),
    ));
    let classes = 2 + r.below(4);
    let labels: Vec<usize> = (0..n + 2).map(|_| r.below(classes)).collect();
    let logits = randn([n + 2, classes, 1, 1], r);
    out.push((
        "softmax_cross_entropy",
        grad_check(&[logits], p, r, &|t, v| {
            t.softmax_cross_entropy(v[0], &labels).unwrap()
        }),
    ));
    out
}

fn block_checks(seed: u64) -> Vec<(&'static str, GradCheck)> {
    let mut rng = Rng::with_stream(seed, 4);
    let r = &mut rng;
    let c = 2 + r.below(3);
    let co = 1 + r.below(4);
    let k = [1, 3, 5][r.below(3)];
    let size = 5 + r.below(3);
    let specs = [
        (
            "sep_conv_block",
            LayerSpec::new(LayerKind::SepConv, c, co, k, 1 + r.below(2)),
        ),
        (
            "std_conv_block",
            LayerSpec::new(LayerKind::StdConv, c, co, k, 1),
        ),
        (
            "residual_block",
            LayerSpec::new(LayerKind::Residual, c, c, k, 1),
        ),
        (
            "sep_residual_block",
            LayerSpec::new(LayerKind::SepResidual, c, c, k, 1),
        ),
        (
            "conv_transpose_block",
            LayerSpec::new(LayerKind::ConvTranspose, c, co, 4, 2),
        ),
        (
            "sep_conv_transpose_block",
            LayerSpec::new(LayerKind::SepConvTranspose, c, co, 4, 2),
        ),
    ];
    specs
        .into_iter()
        .map(|(label, spec)| {
            let mut inputs = vec![randn([2, c, size, size], r)];
            inputs.extend(block_params(&spec, r));
            let err = grad_check(&inputs, 4, r, &|t, v| {
                let y = spec.forward(t, v[0], &v[1..]).unwrap();
                readout(t, y, seed)
            });
            (label, err)
        })
        .collect()
}

/// Full desk generator, one 32x32 image, every parameter tensor probed.
fn generator_check(seed: u64) -> GradCheck {
    let mut rng = Rng::with_stream(seed, 5);
    let cfg = ModelConfig::preset(Scale::Desk, Variant::ALL[seed as usize % 4]);
    let mut g = Generator::new(cfg, &mut rng).unwrap();
    for t in g.params_mut().tensors_mut() {
        t.data_mut()
            .iter_mut()
            .for_each(|v| *v += 0.05 * rng.normal());
    }
    let x = uniform([1, 3, cfg.image_size, cfg.image_size], -1.0, 1.0, &mut rng);
    let c = one_hot(&[rng.below(cfg.num_domains)], cfg.num_domains).unwrap();
    let mut inputs: Vec<Tensor> = g.params().tensors().to_vec();
    let np = inputs.len();
    inputs.push(x);
    grad_check(&inputs, 1, &mut rng, &|t, v| {
        let y = g.forward(t, &v[..np], v[np], &c).unwrap();
        readout(t, y, seed)
    })
}

fn stats(mu: Vec<f64>, sigma: DMatrix<f64>) -> GaussianStats {
    GaussianStats {
        mu: DVector::from_vec(mu),
        sigma,
        n: 0,
    }
}

fn random_psd(d: usize, rng: &mut Rng) -> DMatrix<f64> {
    // rank-deficient about a third of the time
    let rank = if rng.below(3) == 0 {
        1 + rng.below(d)
    } else {
        d + rng.below(4)
    };
    let a = DMatrix::from_fn(d, rank, |_, _| rng.normal());
    &a * a.transpose() / rank as f64
}

/// `||mu_r - mu_g||^2 + tr(S_r + S_g) - 2 sum sqrt(eig(S_r S_g))`, with the
/// eigenvalues of the non-symmetric product taken from a general solver.
fn literal_frechet(r: &GaussianStats, g: &GaussianStats) -> f64 {
    let product = &r.sigma * &g.sigma;
    let cross: f64 = product
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re.max(0.0).sqrt())
        .sum();
    (&r.mu - &g.mu).norm_squared() + r.sigma.trace() + g.sigma.trace() - 2.0 * cross
}

fn frechet() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(4);
    let one = |v: f64| DMatrix::from_element(1, 1, v);
    let sigma = random_psd(6, &mut rng);
    let same = stats(vec![0.3; 6], sigma);
    let identity = frechet_distance(&same, &same).unwrap();
    let shift = frechet_distance(&stats(vec![0.0], one(1.0)), &stats(vec![1.0], one(1.0))).unwrap();
    let spread =
        frechet_distance(&stats(vec![0.0], one(4.0)), &stats(vec![0.0], one(1.0))).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = 1 + rng.below(32);
        let mu_r: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let mu_g: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let r = stats(mu_r, random_psd(d, &mut rng));
        let g = stats(mu_g, random_psd(d, &mut rng));
        let ours = frechet_distance(&r, &g).unwrap();
        let oracle = literal_frechet(&r, &g).max(0.0);
        worst = worst.max((ours - oracle).abs() / oracle.max(1.0));
    }
    let pass = identity.abs() <= 1e-9
        && (shift - 1.0).abs() <= 1e-9
        && (spread - 1.0).abs() <= 1e-9
        && worst <= 1e-8
        && start.elapsed().as_secs_f64() < 30.0;
    (
        pass,
        format!("identity {identity:e}, 1-D cases {shift} and {spread}, 100 PSD pairs max rel dev {worst:e}"),
    )
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn loss_algebra() -> Outcome {
    let ln2 = 2f64.ln();
    let zeros = Tensor::zeros([4, 1, 3, 3]);
    let (adv_d, adv_g) = adversarial_from_logits(&zeros, &zeros);
    let domains = 5;
    let ce = cross_entropy(&Tensor::zeros([3, domains, 1, 1]), &[0, 4, 2]).unwrap();
    let closed = close(adv_d, 2.0 * ln2) && close(adv_g, ln2) && close(ce, (domains as f64).ln());

    let model = tiny_model(Variant::Baseline);
    let cfg = TrainConfig {
        batch_size: 4,
        ..TrainConfig::default()
    };
    let data = Dataset::render(DomainSpec::new(2).unwrap(), 4, model.image_size, 11).unwrap();
    let mut gan = Gan::new(model, 5).unwrap();
    let mut sums = true;
    let mut recomputed = true;
    for step in 0..3 {
        let idx: Vec<usize> = (0..4).map(|i| (i * 2 + step) % data.len()).collect();
        let batch = data.batch(&idx);
        let targets: Vec<usize> = batch.labels.iter().map(|&l| 1 - l).collect();
        let c_trg = one_hot(&targets, model.num_domains).unwrap();

        let before = gan.clone();
        let dm = train_step_d(&mut gan, &cfg, &batch, &targets).unwrap();
        let fake = before.g.generate(&batch.images, &c_trg).unwrap();
        let (adv_d, _) = adversarial_loss_terms(&before.d, &batch.images, &fake).unwrap();
        let (cls_r, _) =
            classification_losses(&before.d, &batch.images, &batch.labels, &fake, &targets)
                .unwrap();
        sums &= close(dm.loss_d, dm.adv_d + cfg.lambda_cls * dm.cls_r);
        recomputed &= close(dm.adv_d, adv_d) && close(dm.cls_r, cls_r);

        let before = gan.clone();
        let gm = train_step_g(&mut gan, &cfg, &batch, &targets).unwrap();
        let fake = before.g.generate(&batch.images, &c_trg).unwrap();
        let (_, adv_g) = adversarial_loss_terms(&before.d, &batch.images, &fake).unwrap();
        let (_, cls_f) =
            classification_losses(&before.d, &batch.images, &batch.labels, &fake, &targets)
                .unwrap();
        let rec = reconstruction_loss(&before.g, &batch.images, &batch.labels, &targets).unwrap();
        sums &= close(
            gm.loss_g,
            gm.adv_g + cfg.lambda_cls * gm.cls_f + cfg.lambda_rec * gm.rec,
        );
        sums &= close(gm.loss_g, adv_g + cls_f + 10.0 * rec);
        recomputed &= close(gm.adv_g, adv_g) && close(gm.cls_f, cls_f) && close(gm.rec, rec);
    }
    let weights = cfg.lambda_cls == 1.0 && cfg.lambda_rec == 10.0;
    (
        closed && sums && recomputed && weights,
        format!("closed forms {closed}, logged totals {sums}, components recomputed {recomputed}"),
    )
}

struct TrendRun {
    first_fid: f64,
    last_fid: f64,
    rec_100: f64,
    rec_last: f64,
    wall_ms: f64,
}

fn trend_run(variant: Variant, data: &Dataset, out: &Path) -> TrendRun {
    let model = ModelConfig::preset(Scale::Desk, variant);
    let cfg = TrainConfig {
        fid_every: 2000,
        fid_sample_count: 500,
        sample_every: 0,
        checkpoint_every: 0,
        log_wall_time: true,
        ..TrainConfig::default()
    };
    assert_eq!(cfg.total_iters, 2000);
    let mut trainer = Trainer::new(model, cfg, data).unwrap();
    let summary = trainer.run(data, out).unwrap();
    let fids = summary.fids();
    // single-batch values are noisy, so each end is a 20-iteration mean
    let rec = |last: u64| {
        let w: Vec<f64> = summary
            .rows
            .iter()
            .filter(|r| r.iter + 20 > last && r.iter <= last)
            .filter_map(|r| r.g.map(|g| g.rec))
            .collect();
        w.iter().sum::<f64>() / w.len() as f64
    };
    TrendRun {
        first_fid: fids[0].1,
        last_fid: fids[fids.len() - 1].1,
        rec_100: rec(110),
        rec_last: rec(2000),
        wall_ms: summary.mean_wall_ms().unwrap(),
    }
}

fn training_trend() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = Dataset::render(DomainSpec::new(2).unwrap(), 200, 32, 7).unwrap();
    let base = trend_run(Variant::Baseline, &data, &dir.path().join("baseline"));
    let sep = trend_run(Variant::DepthwiseG, &data, &dir.path().join("depthwise-g"));
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, r) in [("baseline", &base), ("depthwise-g", &sep)] {
        let fid_ok = r.last_fid < 0.6 * r.first_fid;
        let rec_ok = r.rec_last <= 0.5 * r.rec_100;
        pass &= fid_ok && rec_ok;
        parts.push(format!(
            "{name}: fid {:.3} -> {:.3}, rec (20-iter means) {:.4} -> {:.4}, {:.0} ms/iter",
            r.first_fid, r.last_fid, r.rec_100, r.rec_last, r.wall_ms
        ));
    }
    pass &= sep.wall_ms < base.wall_ms;
    (pass, parts.join("; "))
}

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let model = tiny_model(Variant::DepthwiseG);
    let data = Dataset::render(DomainSpec::new(2).unwrap(), 8, model.image_size, 13).unwrap();
    let cfg = TrainConfig {
        batch_size: 4,
        total_iters: 8,
        n_critic: 2,
        fid_every: 4,
        fid_sample_count: 24,
        sample_every: 4,
        checkpoint_every: 4,
        log_wall_time: false,
        ..TrainConfig::default()
    };
    let run = |name: &str, cfg: TrainConfig| {
        let out = dir.path().join(name);
        Trainer::new(model, cfg, &data)
            .unwrap()
            .run(&data, &out)
            .unwrap();
        out
    };
    let a = run("a", cfg);
    let b = run("b", cfg);
    let read = |p: &Path| fs::read(p).unwrap();
    let csv_same = read(&a.join("metrics.csv")) == read(&b.join("metrics.csv"));

    let c = run(
        "c",
        TrainConfig {
            total_iters: 4,
            ..cfg
        },
    );
    let ckpt = Checkpoint::load(&c.join("checkpoint_000004.sgan")).unwrap();
    Trainer::from_checkpoint(&ckpt, cfg, &data)
        .unwrap()
        .run(&data, &c)
        .unwrap();
    let resumed = read(&c.join("metrics.csv")) == read(&a.join("metrics.csv"))
        && read(&c.join("checkpoint_000008.sgan")) == read(&a.join("checkpoint_000008.sgan"));

    let bytes = read(&a.join("checkpoint_000008.sgan"));
    let decoded = Checkpoint::decode(&bytes).unwrap();
    let copy = dir.path().join("copy.sgan");
    decoded.save(&copy).unwrap();
    let round_trip = decoded.encode() == bytes && read(&copy) == bytes;
    (
        csv_same && resumed && round_trip,
        format!("identical csv {csv_same}, resume matches {resumed}, checkpoint round-trip {round_trip}"),
    )
}

/// Separable block output against a dense convolution whose kernel is
/// `pw[o, i] * dw[i, ky, kx]` and whose bias folds the depthwise bias
/// through the pointwise weights.
fn factorization() -> Outcome {
    let mut rng = Rng::new(8);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let r = &mut rng;
        let (ci, co) = (1 + r.below(6), 1 + r.below(6));
        let k = 1 + r.below(5);
        let stride = 1 + r.below(2);
        let (h, w) = (k + r.below(8), k + r.below(8));
        let spec = LayerSpec::new(LayerKind::SepConv, ci, co, k, stride).with_norm(Norm::None);
        let spec = spec.with_activation(Activation::None);
        let x = randn([1 + r.below(2), ci, h, w], r);
        let p = block_params(&spec, r);
        let (dw, dwb, pw, pwb) = (&p[0], &p[1], &p[2], &p[3]);

        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let vars: Vec<Var> = p.iter().map(|v| t.constant(v.clone())).collect();
        let sep = spec.forward(&mut t, xv, &vars).unwrap();

        let mut dense = Tensor::zeros([co, ci, k, k]);
        let mut bias = Tensor::zeros([1, co, 1, 1]);
        for o in 0..co {
            let mut b = pwb.at(0, o, 0, 0);
            for i in 0..ci {
                b += pw.at(o, i, 0, 0) * dwb.at(0, i, 0, 0);
                for ky in 0..k {
                    for kx in 0..k {
                        dense.set(o, i, ky, kx, pw.at(o, i, 0, 0) * dw.at(i, 0, ky, kx));
                    }
                }
            }
            bias.set(0, o, 0, 0, b);
        }
        let wv = t.constant(dense);
        let bv = t.constant(bias);
        let full = t.conv2d(xv, wv, bv, stride, spec.padding()).unwrap();
        let (a, b) = (t.value(sep), t.value(full));
        assert_eq!(a.shape(), b.shape());
        let scale = b.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(a.max_abs_diff(b) / scale);
    }
    (
        worst <= 1e-12,
        format!("50 configurations, max scaled deviation {worst:e}"),
    )
}
