//! Alternating discriminator/generator updates.
//!
//! Per iteration: draw a batch, permute its labels into translation
//! targets, take one discriminator step, and every `n_critic` iterations
//! one generator step on the same batch and targets.
//!
//! ```text
//! L_D = bce(src(x), 1) + bce(src(G(x, c)), 0) + lambda_cls * ce(cls(x), c_x)
//! L_G = bce(src(G(x, c)), 1) + lambda_cls * ce(cls(G(x, c)), c) + lambda_rec * |x - G(G(x, c), c_x)|
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::checkpoint::{self, join_u64, split_u64, Checkpoint};
use crate::data::{tile_grid, write_image, Batch, Dataset, Sampler, SamplerState};
use crate::error::{Error, Result};
use crate::fid::{fid_of_model, PixelStats};
use crate::models::{one_hot, Discriminator, Generator, ModelConfig, Variant};
use crate::optim::{AdamConfig, AdamState};
use crate::params::Parameters;
use crate::rng::{Rng, RngState};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const CSV_HEADER: &str = "iter,loss_d,loss_g,adv_d,adv_g,cls_r,cls_f,rec,fid,wall_ms";

const SAMPLER_STREAM: u64 = 1;
const TARGET_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda_cls: f64,
    pub lambda_rec: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub total_iters: u64,
    pub n_critic: u64,
    pub seed: u64,
    /// 0 disables sample grids.
    pub sample_every: u64,
    /// 0 disables FID evaluation.
    pub fid_every: u64,
    pub fid_sample_count: usize,
    /// 0 keeps only the final checkpoint.
    pub checkpoint_every: u64,
    /// When false the `wall_ms` column is left empty so logs compare byte for byte.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_cls: 1.0,
            lambda_rec: 10.0,
            adam: AdamConfig::default(),
            batch_size: 8,
            total_iters: 2000,
            n_critic: 1,
            seed: 1,
            sample_every: 500,
            fid_every: 500,
            fid_sample_count: 140,
            checkpoint_every: 1000,
            log_wall_time: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda_cls >= 0.0 && self.lambda_rec >= 0.0) {
            return bad(format!(
                "lambda_cls and lambda_rec must be >= 0, got {} and {}",
                self.lambda_cls, self.lambda_rec
            ));
        }
        if self.total_iters == 0 {
            return bad("total_iters must be at least 1".into());
        }
        if self.n_critic == 0 || self.batch_size == 0 {
            return bad("n_critic and batch_size must be positive".into());
        }
        if self.fid_every > 0 && self.fid_sample_count < 2 {
            return bad("fid_sample_count must be at least 2".into());
        }
        self.adam.validate()
    }

    /// Hash of everything that shapes the optimization trajectory. Run
    /// length and logging cadence are excluded so a run can be extended.
    pub fn digest(&self, model: &ModelConfig) -> [u8; 32] {
        let mut s = format!("{model:?}\n");
        let a = &self.adam;
        write!(
            s,
            "{:?} {:?} {:?} {:?} {:?} {:?} {} {} {}",
            self.lambda_cls,
            self.lambda_rec,
            a.lr,
            a.beta1,
            a.beta2,
            a.eps,
            self.batch_size,
            self.n_critic,
            self.seed
        )
        .expect("string write");
        checkpoint::digest(&s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DMetrics {
    pub loss_d: f64,
    pub adv_d: f64,
    pub cls_r: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GMetrics {
    pub loss_g: f64,
    pub adv_g: f64,
    pub cls_f: f64,
    pub rec: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterMetrics {
    pub iter: u64,
    pub d: Option<DMetrics>,
    pub g: Option<GMetrics>,
    pub fid: Option<f64>,
    pub wall_ms: Option<f64>,
}

impl IterMetrics {
    pub fn csv_row(&self) -> String {
        let f = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
        let (d, g) = (self.d, self.g);
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.iter,
            f(d.map(|d| d.loss_d)),
            f(g.map(|g| g.loss_g)),
            f(d.map(|d| d.adv_d)),
            f(g.map(|g| g.adv_g)),
            f(d.map(|d| d.cls_r)),
            f(g.map(|g| g.cls_f)),
            f(g.map(|g| g.rec)),
            f(self.fid),
            self.wall_ms.map(|v| format!("{v:.3}")).unwrap_or_default(),
        )
    }
}

fn finite(term: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            term: term.to_string(),
        })
    }
}

fn adv_d_on(tape: &mut Tape, src_real: Var, src_fake: Var) -> Result<Var> {
    let r = tape.bce_with_logits(src_real, 1.0);
    let f = tape.bce_with_logits(src_fake, 0.0);
    tape.add(r, f)
}

/// `(L_adv_d, L_adv_g)` for a discriminator on real and fake images.
pub fn adversarial_loss_terms(
    d: &Discriminator,
    x_real: &Tensor,
    x_fake: &Tensor,
) -> Result<(f64, f64)> {
    if x_real.shape() != x_fake.shape() {
        return Err(Error::Shape {
            op: "adversarial_loss_terms",
            lhs_name: "real",
            lhs: x_real.shape(),
            rhs_name: "fake",
            rhs: x_fake.shape(),
        });
    }
    let (src_r, _) = d.discriminate(x_real)?;
    let (src_f, _) = d.discriminate(x_fake)?;
    Ok(adversarial_from_logits(&src_r, &src_f))
}

/// Same as [`adversarial_loss_terms`] on precomputed patch logits.
pub fn adversarial_from_logits(src_real: &Tensor, src_fake: &Tensor) -> (f64, f64) {
    let mut tape = Tape::new();
    let r = tape.constant(src_real.clone());
    let f = tape.constant(src_fake.clone());
    let adv_d = adv_d_on(&mut tape, r, f).expect("scalars");
    let adv_g = tape.bce_with_logits(f, 1.0);
    (tape.value(adv_d).item(), tape.value(adv_g).item())
}

/// Softmax cross-entropy of `(n, classes, 1, 1)` logits.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let ce = tape.softmax_cross_entropy(l, labels)?;
    Ok(tape.value(ce).item())
}

/// `(L_cls_r, L_cls_f)`.
pub fn classification_losses(
    d: &Discriminator,
    x_real: &Tensor,
    label_real: &[usize],
    x_fake: &Tensor,
    label_target: &[usize],
) -> Result<(f64, f64)> {
    let (_, cls_r) = d.discriminate(x_real)?;
    let (_, cls_f) = d.discriminate(x_fake)?;
    Ok((
        cross_entropy(&cls_r, label_real)?,
        cross_entropy(&cls_f, label_target)?,
    ))
}

/// Mean `|x - G(G(x, c_target), c_orig)|`.
pub fn reconstruction_loss(
    g: &Generator,
    x: &Tensor,
    c_orig: &[usize],
    c_target: &[usize],
) -> Result<f64> {
    let n = g.config().num_domains;
    let fake = g.generate(x, &one_hot(c_target, n)?)?;
    let rec = g.generate(&fake, &one_hot(c_orig, n)?)?;
    let mut tape = Tape::new();
    let a = tape.constant(x.clone());
    let b = tape.constant(rec);
    let l = tape.l1(a, b)?;
    Ok(tape.value(l).item())
}

#[derive(Clone, Debug)]
pub struct Gan {
    pub g: Generator,
    pub d: Discriminator,
    pub opt_g: AdamState,
    pub opt_d: AdamState,
}

impl Gan {
    /// Generator weights are drawn before discriminator weights from one stream.
    pub fn new(model: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = Rng::new(seed);
        let g = Generator::new(model, &mut rng)?;
        let d = Discriminator::new(model, &mut rng)?;
        Ok(Gan {
            opt_g: AdamState::new(g.params()),
            opt_d: AdamState::new(d.params()),
            g,
            d,
        })
    }
}

fn check_batch(batch: &Batch, targets: &[usize]) -> Result<()> {
    if batch.labels.len() != batch.images.shape().n || targets.len() != batch.labels.len() {
        return Err(Error::invalid(
            "train_step",
            format!(
                "{} images, {} labels, {} targets",
                batch.images.shape().n,
                batch.labels.len(),
                targets.len()
            ),
        ));
    }
    Ok(())
}

/// One discriminator update. The generator only produces constants.
pub fn train_step_d(
    gan: &mut Gan,
    cfg: &TrainConfig,
    batch: &Batch,
    targets: &[usize],
) -> Result<DMetrics> {
    check_batch(batch, targets)?;
    let n = gan.g.config().num_domains;
    let fake = gan.g.generate(&batch.images, &one_hot(targets, n)?)?;

    let mut tape = Tape::new();
    let bound = gan.d.params().bind(&mut tape, true);
    let x = tape.constant(batch.images.clone());
    let xf = tape.constant(fake);
    let (src_r, cls_r) = gan.d.forward(&mut tape, &bound, x)?;
    let (src_f, _) = gan.d.forward(&mut tape, &bound, xf)?;
    let adv = adv_d_on(&mut tape, src_r, src_f)?;
    let cls = tape.softmax_cross_entropy(cls_r, &batch.labels)?;
    let weighted = tape.scale(cls, cfg.lambda_cls);
    let loss = tape.add(adv, weighted)?;

    let m = DMetrics {
        adv_d: finite("adv_d", tape.value(adv).item())?,
        cls_r: finite("cls_r", tape.value(cls).item())?,
        loss_d: finite("loss_d", tape.value(loss).item())?,
    };
    tape.backward(loss)?;
    let grads = gan.d.params().grads(&tape, &bound);
    gan.opt_d.update(&cfg.adam, gan.d.params_mut(), &grads)?;
    Ok(m)
}

/// One generator update through a frozen discriminator.
pub fn train_step_g(
    gan: &mut Gan,
    cfg: &TrainConfig,
    batch: &Batch,
    targets: &[usize],
) -> Result<GMetrics> {
    check_batch(batch, targets)?;
    let n = gan.g.config().num_domains;
    let c_trg = one_hot(targets, n)?;
    let c_org = one_hot(&batch.labels, n)?;

    let mut tape = Tape::new();
    let g_bound = gan.g.params().bind(&mut tape, true);
    let d_bound = gan.d.params().bind(&mut tape, false);
    let x = tape.constant(batch.images.clone());
    let fake = gan.g.forward(&mut tape, &g_bound, x, &c_trg)?;
    let (src_f, cls_f) = gan.d.forward(&mut tape, &d_bound, fake)?;
    let adv = tape.bce_with_logits(src_f, 1.0);
    let cls = tape.softmax_cross_entropy(cls_f, targets)?;
    let rec_img = gan.g.forward(&mut tape, &g_bound, fake, &c_org)?;
    let rec = tape.l1(x, rec_img)?;
    let wc = tape.scale(cls, cfg.lambda_cls);
    let wr = tape.scale(rec, cfg.lambda_rec);
    let partial = tape.add(adv, wc)?;
    let loss = tape.add(partial, wr)?;

    let m = GMetrics {
        adv_g: finite("adv_g", tape.value(adv).item())?,
        cls_f: finite("cls_f", tape.value(cls).item())?,
        rec: finite("rec", tape.value(rec).item())?,
        loss_g: finite("loss_g", tape.value(loss).item())?,
    };
    tape.backward(loss)?;
    let grads = gan.g.params().grads(&tape, &g_bound);
    gan.opt_g.update(&cfg.adam, gan.g.params_mut(), &grads)?;
    Ok(m)
}

/// Everything needed to continue a run bit-exactly.
#[derive(Clone, Debug)]
pub struct Trainer {
    model: ModelConfig,
    cfg: TrainConfig,
    gan: Gan,
    sampler: Sampler,
    target_rng: Rng,
    iteration: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub rows: Vec<IterMetrics>,
}

impl TrainSummary {
    pub fn fids(&self) -> Vec<(u64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.fid.map(|f| (r.iter, f)))
            .collect()
    }

    pub fn mean_wall_ms(&self) -> Option<f64> {
        let w: Vec<f64> = self.rows.iter().filter_map(|r| r.wall_ms).collect();
        (!w.is_empty()).then(|| w.iter().sum::<f64>() / w.len() as f64)
    }
}

fn rng_tensor(s: RngState) -> Tensor {
    let [a, b] = split_u64(s.seed);
    let [c, d] = split_u64(s.stream);
    let [e, f] = split_u64(s.word_pos as u64);
    let [g, h] = split_u64((s.word_pos >> 64) as u64);
    Tensor::vector(vec![a, b, c, d, e, f, g, h])
}

fn rng_from_tensor(t: &Tensor) -> Result<RngState> {
    let v = t.data();
    if v.len() != 8 {
        return Err(Error::invalid("checkpoint", "rng state needs 8 values"));
    }
    Ok(RngState {
        seed: join_u64(v[0], v[1]),
        stream: join_u64(v[2], v[3]),
        word_pos: join_u64(v[4], v[5]) as u128 | (join_u64(v[6], v[7]) as u128) << 64,
    })
}

fn model_tensor(m: &ModelConfig) -> Tensor {
    let v = [
        m.variant.index(),
        m.image_size,
        m.image_channels,
        m.num_domains,
        m.base_channels,
        m.n_bottleneck,
        m.deep_std_blocks,
        m.deep_sep_blocks,
        m.d_repeat,
        m.d_sep_blocks,
    ];
    Tensor::vector(v.iter().map(|&x| x as f64).collect())
}

/// Architecture stored in a checkpoint, enough to rebuild the networks.
pub fn model_from_checkpoint(ckpt: &Checkpoint) -> Result<ModelConfig> {
    let v: Vec<usize> = ckpt
        .get("meta.model")?
        .data()
        .iter()
        .map(|&x| x as usize)
        .collect();
    if v.len() != 10 || v[0] >= Variant::ALL.len() {
        return Err(Error::invalid("checkpoint", "malformed meta.model"));
    }
    let m = ModelConfig {
        variant: Variant::ALL[v[0]],
        image_size: v[1],
        image_channels: v[2],
        num_domains: v[3],
        base_channels: v[4],
        n_bottleneck: v[5],
        deep_std_blocks: v[6],
        deep_sep_blocks: v[7],
        d_repeat: v[8],
        d_sep_blocks: v[9],
    };
    m.validate()?;
    Ok(m)
}

fn push_params(ckpt: &mut Checkpoint, params: &Parameters) {
    for (name, t) in params.iter() {
        ckpt.push(name, t.clone());
    }
}

fn push_adam(ckpt: &mut Checkpoint, prefix: &str, params: &Parameters, opt: &AdamState) {
    for (i, name) in params.names().iter().enumerate() {
        ckpt.push(format!("{prefix}.m.{name}"), opt.m[i].clone());
    }
    for (i, name) in params.names().iter().enumerate() {
        ckpt.push(format!("{prefix}.v.{name}"), opt.v[i].clone());
    }
    ckpt.push(format!("{prefix}.step"), Tensor::scalar(opt.step as f64));
}

fn read_params(ckpt: &Checkpoint, params: &mut Parameters) -> Result<()> {
    for i in 0..params.len() {
        let t = ckpt.get(params.name(i))?;
        if t.shape() != params.get(i).shape() {
            return Err(Error::invalid(
                "checkpoint",
                format!(
                    "{} has shape {}, model expects {}",
                    params.name(i),
                    t.shape(),
                    params.get(i).shape()
                ),
            ));
        }
        *params.get_mut(i) = t.clone();
    }
    Ok(())
}

fn read_adam(ckpt: &Checkpoint, prefix: &str, params: &Parameters) -> Result<AdamState> {
    let mut opt = AdamState::new(params);
    for (i, name) in params.names().iter().enumerate() {
        opt.m[i] = ckpt.get(&format!("{prefix}.m.{name}"))?.clone();
        opt.v[i] = ckpt.get(&format!("{prefix}.v.{name}"))?.clone();
    }
    opt.step = ckpt.get(&format!("{prefix}.step"))?.item() as u64;
    Ok(opt)
}

/// Loads only the generator from a checkpoint.
pub fn generator_from_checkpoint(ckpt: &Checkpoint) -> Result<Generator> {
    let model = model_from_checkpoint(ckpt)?;
    let mut g = Generator::new(model, &mut Rng::new(0))?;
    read_params(ckpt, g.params_mut())?;
    Ok(g)
}

impl Trainer {
    pub fn new(model: ModelConfig, cfg: TrainConfig, dataset: &Dataset) -> Result<Self> {
        cfg.validate()?;
        check_dataset(&model, dataset)?;
        Ok(Trainer {
            gan: Gan::new(model, cfg.seed)?,
            sampler: Sampler::new(dataset.len(), Rng::with_stream(cfg.seed, SAMPLER_STREAM)),
            target_rng: Rng::with_stream(cfg.seed, TARGET_STREAM),
            iteration: 0,
            model,
            cfg,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn gan(&self) -> &Gan {
        &self.gan
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// One iteration: a discriminator step, plus a generator step when due.
    pub fn step(&mut self, dataset: &Dataset) -> Result<IterMetrics> {
        let start = Instant::now();
        let batch = self.sampler.next_batch(dataset, self.cfg.batch_size)?;
        let perm = self.target_rng.permutation(batch.labels.len());
        let targets: Vec<usize> = perm.iter().map(|&i| batch.labels[i]).collect();
        self.iteration += 1;
        let d = train_step_d(&mut self.gan, &self.cfg, &batch, &targets)?;
        let g = if self.iteration.is_multiple_of(self.cfg.n_critic) {
            Some(train_step_g(&mut self.gan, &self.cfg, &batch, &targets)?)
        } else {
            None
        };
        let wall = start.elapsed().as_secs_f64() * 1e3;
        Ok(IterMetrics {
            iter: self.iteration,
            d: Some(d),
            g,
            fid: None,
            wall_ms: self.cfg.log_wall_time.then_some(wall),
        })
    }

    pub fn fid(&self, dataset: &Dataset) -> Result<f64> {
        Ok(fid_of_model(
            &self.gan.g,
            dataset,
            &PixelStats,
            self.cfg.fid_sample_count,
            self.cfg.seed,
        )?
        .fid)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::new(self.cfg.digest(&self.model));
        c.push("meta.iteration", Tensor::scalar(self.iteration as f64));
        c.push("meta.model", model_tensor(&self.model));
        push_params(&mut c, self.gan.g.params());
        push_params(&mut c, self.gan.d.params());
        push_adam(&mut c, "adam_g", self.gan.g.params(), &self.gan.opt_g);
        push_adam(&mut c, "adam_d", self.gan.d.params(), &self.gan.opt_d);
        c.push("rng.targets", rng_tensor(self.target_rng.state()));
        let s = self.sampler.state();
        c.push(
            "sampler.order",
            Tensor::vector(s.order.iter().map(|&i| i as f64).collect()),
        );
        c.push("sampler.cursor", Tensor::scalar(s.cursor as f64));
        c.push("sampler.rng", rng_tensor(s.rng));
        c
    }

    /// Restores a run. `cfg` must match the checkpoint in everything but
    /// run length and logging cadence.
    pub fn from_checkpoint(ckpt: &Checkpoint, cfg: TrainConfig, dataset: &Dataset) -> Result<Self> {
        cfg.validate()?;
        let model = model_from_checkpoint(ckpt)?;
        if ckpt.digest != cfg.digest(&model) {
            return Err(Error::Config(
                "checkpoint was written with different model or optimization settings".into(),
            ));
        }
        check_dataset(&model, dataset)?;
        let mut gan = Gan::new(model, cfg.seed)?;
        read_params(ckpt, gan.g.params_mut())?;
        read_params(ckpt, gan.d.params_mut())?;
        gan.opt_g = read_adam(ckpt, "adam_g", gan.g.params())?;
        gan.opt_d = read_adam(ckpt, "adam_d", gan.d.params())?;
        let order: Vec<usize> = ckpt
            .get("sampler.order")?
            .data()
            .iter()
            .map(|&x| x as usize)
            .collect();
        if order.len() != dataset.len() {
            return Err(Error::invalid(
                "checkpoint",
                "sampler order does not match the dataset size",
            ));
        }
        let sampler = Sampler::from_state(SamplerState {
            order,
            cursor: ckpt.get("sampler.cursor")?.item() as usize,
            rng: rng_from_tensor(ckpt.get("sampler.rng")?)?,
        })?;
        Ok(Trainer {
            model,
            cfg,
            gan,
            sampler,
            target_rng: Rng::from_state(rng_from_tensor(ckpt.get("rng.targets")?)?),
            iteration: ckpt.get("meta.iteration")?.item() as u64,
        })
    }

    /// Translations of a few fixed inputs into every domain, one row per input.
    pub fn sample_grid(&self, dataset: &Dataset) -> Result<Tensor> {
        let n = dataset.num_domains();
        let picks: Vec<usize> = (0..4).map(|j| j * dataset.len() / 4).collect();
        let x = dataset.images().gather(&picks);
        let mut tiles = Vec::new();
        let outs: Vec<Tensor> = (0..n)
            .map(|d| self.gan.g.generate(&x, &one_hot(&vec![d; picks.len()], n)?))
            .collect::<Result<_>>()?;
        for (row, &p) in picks.iter().enumerate() {
            tiles.push(dataset.images().gather(&[p]));
            for out in &outs {
                tiles.push(out.gather(&[row]));
            }
        }
        tile_grid(&Tensor::stack(&tiles)?, n + 1)
    }

    /// Runs to `total_iters`, writing `metrics.csv`, `samples/` and
    /// checkpoints under `out`. A resumed run rewrites the log up to its
    /// checkpoint and continues it.
    pub fn run(&mut self, dataset: &Dataset, out: &Path) -> Result<TrainSummary> {
        fs::create_dir_all(out.join("samples")).map_err(|e| Error::io(out, e))?;
        let csv_path = out.join("metrics.csv");
        let mut log = String::from(CSV_HEADER);
        log.push('\n');
        if self.iteration > 0 {
            if let Ok(old) = fs::read_to_string(&csv_path) {
                for line in old.lines().skip(1) {
                    let it: u64 = line
                        .split(',')
                        .next()
                        .and_then(|s| s.parse().ok())
                        .unwrap_or(u64::MAX);
                    if it <= self.iteration {
                        log.push_str(line);
                        log.push('\n');
                    }
                }
            }
        }
        let mut file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        file.write_all(log.as_bytes())
            .map_err(|e| Error::io(&csv_path, e))?;

        let mut rows = Vec::new();
        let mut emit = |row: IterMetrics, file: &mut fs::File| -> Result<()> {
            writeln!(file, "{}", row.csv_row()).map_err(|e| Error::io(&csv_path, e))?;
            rows.push(row);
            Ok(())
        };
        if self.iteration == 0 && self.cfg.fid_every > 0 {
            let fid = self.fid(dataset)?;
            log::info!("iter 0 fid {fid:.4}");
            emit(
                IterMetrics {
                    iter: 0,
                    d: None,
                    g: None,
                    fid: Some(fid),
                    wall_ms: None,
                },
                &mut file,
            )?;
        }
        while self.iteration < self.cfg.total_iters {
            let mut row = self.step(dataset)?;
            let it = self.iteration;
            if self.cfg.fid_every > 0 && it.is_multiple_of(self.cfg.fid_every) {
                let fid = self.fid(dataset)?;
                log::info!("iter {it} fid {fid:.4}");
                row.fid = Some(fid);
            }
            if self.cfg.sample_every > 0 && it.is_multiple_of(self.cfg.sample_every) {
                let grid = self.sample_grid(dataset)?;
                write_image(
                    &out.join("samples").join(format!("iter_{it:06}.ppm")),
                    &grid,
                )?;
            }
            if (self.cfg.checkpoint_every > 0 && it.is_multiple_of(self.cfg.checkpoint_every))
                || it == self.cfg.total_iters
            {
                self.to_checkpoint()
                    .save(&out.join(format!("checkpoint_{it:06}.sgan")))?;
            }
            if it.is_multiple_of(100) {
                log::info!("iter {it} {}", row.csv_row());
            }
            emit(row, &mut file)?;
        }
        Ok(TrainSummary { rows })
    }
}

fn check_dataset(model: &ModelConfig, dataset: &Dataset) -> Result<()> {
    if dataset.image_size() != model.image_size || dataset.num_domains() > model.num_domains {
        return Err(Error::Config(format!(
            "dataset has {}x{} images in {} domains, model expects {}x{} and at most {} domains",
            dataset.image_size(),
            dataset.image_size(),
            dataset.num_domains(),
            model.image_size,
            model.image_size,
            model.num_domains
        )));
    }
    Ok(())
}
