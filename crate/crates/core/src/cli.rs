//! Command-line interface.
//!
//! Exit codes: 0 success, 1 internal or numeric failure, 2 usage or I/O error.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::cost::{count_table, model_cost, paper_count};
use crate::data::{read_image, write_image, Dataset, DomainSpec};
use crate::error::{Error, Result};
use crate::fid::{fid_of_model, FeatureExtractor, FidReport, PixelStats, TrainedProbe};
use crate::models::{discriminator_plan, generator_plan, one_hot, ModelConfig, Scale, Variant};
use crate::train::{generator_from_checkpoint, Trainer};

pub const THREADS_ENV: &str = "SEPGAN_THREADS";
const PROBE_ITERS: usize = 300;

#[derive(Parser, Debug)]
#[command(
    name = "sepgan",
    version,
    about = "Depthwise separable conditional GANs on synthetic domains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render a synthetic multi-domain dataset as PPM files plus a manifest.
    GenData(GenDataArgs),
    /// Train a generator/discriminator pair.
    Train(TrainArgs),
    /// Frechet distance of a checkpoint's translations against a dataset.
    Fid(FidArgs),
    /// Parameter and MAC counts per variant.
    Count(CountArgs),
    /// Translate one image into target domains.
    Sample(SampleArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub domains: usize,
    #[arg(long, default_value_t = 200)]
    pub per_domain: usize,
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Desk,
    Paper,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Scale {
        match s {
            ScaleArg::Desk => Scale::Desk,
            ScaleArg::Paper => Scale::Paper,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Baseline,
    DepthwiseG,
    DeeperDepthwiseG,
    DepthwiseDg,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Baseline => Variant::Baseline,
            VariantArg::DepthwiseG => Variant::DepthwiseG,
            VariantArg::DeeperDepthwiseG => Variant::DeeperDepthwiseG,
            VariantArg::DepthwiseDg => Variant::DepthwiseDG,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// `key = value` file applied on top of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
    pub preset: ScaleArg,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Dataset directory or manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExtractorArg {
    PixelStats,
    TrainedProbe,
}

#[derive(Args, Debug)]
pub struct FidArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ExtractorArg::PixelStats)]
    pub extractor: ExtractorArg,
    #[arg(long, default_value_t = 140)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CountArgs {
    /// One variant; all four when omitted.
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Paper)]
    pub scale: ScaleArg,
    /// Print the per-layer CSV instead of the summary.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input PPM image.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Only this domain; every domain when omitted.
    #[arg(long)]
    pub target_domain: Option<usize>,
}

/// Configures the worker pool from `SEPGAN_THREADS`, if set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))
        })?;
        // a second initialization (tests) is harmless
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_usage() {
        2
    } else {
        1
    }
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a, out),
        Command::Train(a) => train(a, out),
        Command::Fid(a) => fid(a, out),
        Command::Count(a) => count(a, out),
        Command::Sample(a) => sample(a, out),
    }
}

fn emit(out: &mut dyn std::io::Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn gen_data(a: GenDataArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let spec = DomainSpec::new(a.domains)?;
    let data = Dataset::render(spec, a.per_domain, a.size, a.seed)?;
    data.save(&a.out)?;
    emit(
        out,
        &format!(
            "wrote {} images in {} domains to {}\n",
            data.len(),
            a.domains,
            a.out.display()
        ),
    )
}

/// Preset, then config file, then flags.
pub fn resolve_train_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::preset(a.preset.into());
    if let Some(p) = &a.config {
        cfg = RunConfig::load(p, cfg)?;
    }
    if let Some(v) = a.variant {
        cfg.model.variant = v.into();
    }
    if let Some(p) = &a.data {
        cfg.data = Some(p.clone());
    }
    if let Some(p) = &a.out {
        cfg.out = Some(p.clone());
    }
    if let Some(n) = a.iters {
        cfg.train.total_iters = n;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train(a: TrainArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let cfg = resolve_train_config(&a)?;
    let data_path = cfg.data.clone().ok_or_else(|| {
        Error::Config("no dataset: pass --data or set `data` in the config".into())
    })?;
    let out_dir = cfg.out.clone().ok_or_else(|| {
        Error::Config("no output directory: pass --out or set `out` in the config".into())
    })?;
    let dataset = Dataset::load(&data_path)?;
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let cfg_path = out_dir.join("config.txt");
    fs::write(&cfg_path, cfg.to_text()).map_err(|e| Error::io(&cfg_path, e))?;

    let mut trainer = match &a.resume {
        Some(p) => Trainer::from_checkpoint(&Checkpoint::load(p)?, cfg.train, &dataset)?,
        None => Trainer::new(cfg.model, cfg.train, &dataset)?,
    };
    let summary = trainer.run(&dataset, &out_dir)?;
    let mut report = format!(
        "trained {} to iteration {}\n",
        cfg.model.variant,
        trainer.iteration()
    );
    if let Some(w) = summary.mean_wall_ms() {
        report.push_str(&format!("mean wall time per iteration: {w:.1} ms\n"));
    }
    for (it, f) in summary.fids() {
        report.push_str(&format!("fid at {it}: {f:.4}\n"));
    }
    emit(out, &report)
}

fn fid(a: FidArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let g = generator_from_checkpoint(&ckpt)?;
    let dataset = Dataset::load(&a.data)?;
    let probe;
    let extractor: &dyn FeatureExtractor = match a.extractor {
        ExtractorArg::PixelStats => &PixelStats,
        ExtractorArg::TrainedProbe => {
            probe = TrainedProbe::train(&dataset, PROBE_ITERS, a.seed)?;
            &probe
        }
    };
    if a.n <= extractor.dim() {
        eprintln!(
            "warning: n = {} does not exceed the feature dimension {}; the covariance estimate is rank-deficient",
            a.n,
            extractor.dim()
        );
    }
    let r = fid_of_model(&g, &dataset, extractor, a.n, a.seed)?;
    emit(out, &format!("{}\n{}\n", FidReport::HEADER, r.line()))
}

fn count(a: CountArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let variants: Vec<Variant> = match a.variant {
        Some(v) => vec![v.into()],
        None => Variant::ALL.to_vec(),
    };
    let scale: Scale = a.scale.into();
    if a.csv {
        let mut s = String::new();
        for v in &variants {
            let cfg = ModelConfig::preset(scale, *v);
            for (net, plan) in [
                ("generator", generator_plan(&cfg)?),
                ("discriminator", discriminator_plan(&cfg)?),
            ] {
                s.push_str(&format!("# {v} {net}\n"));
                s.push_str(&model_cost(&plan).csv());
            }
        }
        return emit(out, &s);
    }
    match scale {
        Scale::Paper => {
            let rows = variants
                .iter()
                .map(|&v| paper_count(v))
                .collect::<Result<Vec<_>>>()?;
            emit(out, &count_table(&rows))
        }
        Scale::Desk => {
            let mut s = format!(
                "{:<20} {:>12} {:>12} {:>14}\n",
                "variant", "generator", "discrim.", "g_macs"
            );
            for &v in &variants {
                let cfg = ModelConfig::preset(scale, v);
                let g = model_cost(&generator_plan(&cfg)?).totals();
                let d = model_cost(&discriminator_plan(&cfg)?).totals();
                s.push_str(&format!(
                    "{:<20} {:>12} {:>12} {:>14}\n",
                    v.as_str(),
                    g.params(),
                    d.params(),
                    g.macs
                ));
            }
            emit(out, &s)
        }
    }
}

fn sample(a: SampleArgs, out: &mut dyn std::io::Write) -> Result<()> {
    let g = generator_from_checkpoint(&Checkpoint::load(&a.checkpoint)?)?;
    let x = read_image(&a.input)?;
    let n = g.config().num_domains;
    let domains: Vec<usize> = match a.target_domain {
        Some(d) if d >= n => {
            return Err(Error::Config(format!(
                "target domain {d} out of range for {n} domains"
            )))
        }
        Some(d) => vec![d],
        None => (0..n).collect(),
    };
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let stem = a
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("sample");
    let mut written = String::new();
    for d in domains {
        let y = g.generate(&x, &one_hot(&[d], n)?)?;
        let path: PathBuf = a.out.join(format!("{stem}_to_{d}.ppm"));
        write_image(&path, &y)?;
        written.push_str(&format!("{}\n", path.display()));
    }
    emit(out, &written)
}

/// Parses `args` (including the program name) and runs, returning the exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
