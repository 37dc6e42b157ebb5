//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Later assignments
//! override earlier ones, which is how command-line flags are layered on
//! top of a file. [`RunConfig::to_text`] writes every key, so the echoed
//! file alone reproduces a run.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::{ModelConfig, Scale};
use crate::train::TrainConfig;

const DESK: &str = include_str!("../presets/desk.conf");
const PAPER: &str = include_str!("../presets/paper.conf");

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset(Scale::Desk)
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

impl RunConfig {
    pub fn preset(scale: Scale) -> Self {
        let text = match scale {
            Scale::Desk => DESK,
            Scale::Paper => PAPER,
        };
        parse_preset(text).expect("bundled presets are valid")
    }

    /// Applies one assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (m, t) = (&mut self.model, &mut self.train);
        match key {
            "variant" => m.variant = value.parse()?,
            "image_size" => m.image_size = parse(key, value)?,
            "image_channels" => m.image_channels = parse(key, value)?,
            "num_domains" => m.num_domains = parse(key, value)?,
            "base_channels" => m.base_channels = parse(key, value)?,
            "n_bottleneck" => m.n_bottleneck = parse(key, value)?,
            "deep_std_blocks" => m.deep_std_blocks = parse(key, value)?,
            "deep_sep_blocks" => m.deep_sep_blocks = parse(key, value)?,
            "d_repeat" => m.d_repeat = parse(key, value)?,
            "d_sep_blocks" => m.d_sep_blocks = parse(key, value)?,
            "lambda_cls" => t.lambda_cls = parse(key, value)?,
            "lambda_rec" => t.lambda_rec = parse(key, value)?,
            "lr" => t.adam.lr = parse(key, value)?,
            "beta1" => t.adam.beta1 = parse(key, value)?,
            "beta2" => t.adam.beta2 = parse(key, value)?,
            "adam_eps" => t.adam.eps = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "total_iters" => t.total_iters = parse(key, value)?,
            "n_critic" => t.n_critic = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "sample_every" => t.sample_every = parse(key, value)?,
            "fid_every" => t.fid_every = parse(key, value)?,
            "fid_sample_count" => t.fid_sample_count = parse(key, value)?,
            "checkpoint_every" => t.checkpoint_every = parse(key, value)?,
            "log_wall_time" => t.log_wall_time = parse(key, value)?,
            "data" => self.data = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every assignment in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got {line:?}",
                    i + 1
                ))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path, base: RunConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = base;
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    pub fn to_text(&self) -> String {
        let (m, t) = (&self.model, &self.train);
        let mut s = String::from("# resolved run configuration\n");
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("variant", m.variant.to_string());
        kv("image_size", m.image_size.to_string());
        kv("image_channels", m.image_channels.to_string());
        kv("num_domains", m.num_domains.to_string());
        kv("base_channels", m.base_channels.to_string());
        kv("n_bottleneck", m.n_bottleneck.to_string());
        kv("deep_std_blocks", m.deep_std_blocks.to_string());
        kv("deep_sep_blocks", m.deep_sep_blocks.to_string());
        kv("d_repeat", m.d_repeat.to_string());
        kv("d_sep_blocks", m.d_sep_blocks.to_string());
        kv("lambda_cls", format!("{:?}", t.lambda_cls));
        kv("lambda_rec", format!("{:?}", t.lambda_rec));
        kv("lr", format!("{:?}", t.adam.lr));
        kv("beta1", format!("{:?}", t.adam.beta1));
        kv("beta2", format!("{:?}", t.adam.beta2));
        kv("adam_eps", format!("{:?}", t.adam.eps));
        kv("batch_size", t.batch_size.to_string());
        kv("total_iters", t.total_iters.to_string());
        kv("n_critic", t.n_critic.to_string());
        kv("seed", t.seed.to_string());
        kv("sample_every", t.sample_every.to_string());
        kv("fid_every", t.fid_every.to_string());
        kv("fid_sample_count", t.fid_sample_count.to_string());
        kv("checkpoint_every", t.checkpoint_every.to_string());
        kv("log_wall_time", t.log_wall_time.to_string());
        if let Some(p) = &self.data {
            kv("data", p.display().to_string());
        }
        if let Some(p) = &self.out {
            kv("out", p.display().to_string());
        }
        s
    }
}

fn parse_preset(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig {
        model: ModelConfig {
            variant: crate::models::Variant::Baseline,
            image_size: 0,
            image_channels: 0,
            num_domains: 0,
            base_channels: 0,
            n_bottleneck: 0,
            deep_std_blocks: 0,
            deep_sep_blocks: 0,
            d_repeat: 0,
            d_sep_blocks: 0,
        },
        train: TrainConfig::default(),
        data: None,
        out: None,
    };
    cfg.apply_text(text)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Variant;

    #[test]
    fn presets_parse_and_validate() {
        let desk = RunConfig::preset(Scale::Desk);
        assert_eq!(desk.model.image_size, 32);
        assert_eq!(desk.model.base_channels, 16);
        assert_eq!(desk.train.lambda_rec, 10.0);
        let paper = RunConfig::preset(Scale::Paper);
        assert_eq!(paper.model.image_size, 128);
        assert_eq!(paper.model.num_domains, 5);
        assert_eq!(paper.model.n_bottleneck, 6);
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::preset(Scale::Desk);
        cfg.set("variant", "deeper-depthwise-g").unwrap();
        cfg.set("lr", "0.00025").unwrap();
        cfg.set("data", "/tmp/x").unwrap();
        let mut back = RunConfig::preset(Scale::Paper);
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.model.variant, Variant::DeeperDepthwiseG);
    }

    #[test]
    fn later_lines_override() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("seed = 3\n# comment\n\nseed = 9\n").unwrap();
        assert_eq!(cfg.train.seed, 9);
    }

    #[test]
    fn errors_name_the_line() {
        let mut cfg = RunConfig::default();
        let e = cfg
            .apply_text("seed = 1\nbogus = 2\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 2") && e.contains("bogus"), "{e}");
        let e = cfg
            .apply_text("batch_size = many\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("batch_size"), "{e}");
        assert!(cfg.apply_text("no equals sign").is_err());
    }
}
