//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys and
//! unparsable values are errors; all of them are reported at once, each with
//! its line number.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cyclegan::{DiscriminatorConfig, GeneratorConfig, TrainHyper};
use crate::error::{Error, Result};
use crate::tiling::{InferenceStrategy, DEFAULT_EFFECTIVE, DEFAULT_WINDOW};

/// Strategy selector as written in configs and on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategyKind {
    Naive,
    Global,
    Sliding,
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(StrategyKind::Naive),
            "global" => Ok(StrategyKind::Global),
            "sliding" => Ok(StrategyKind::Sliding),
            other => Err(Error::invalid(format!("unknown strategy '{other}' (expected naive, global or sliding)"))),
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StrategyKind::Naive => "naive",
            StrategyKind::Global => "global",
            StrategyKind::Sliding => "sliding",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub hyper: TrainHyper,
    /// Training iterations.
    pub iterations: u64,
    /// Checkpoint interval in iterations (0 disables intermediate checkpoints).
    pub checkpoint_every: u64,
    /// Directory produced by the `synth` command.
    pub data_dir: PathBuf,
    pub strategy: StrategyKind,
    /// Tile size for the naive and global-statistics strategies.
    pub tile: usize,
    pub effective: usize,
    pub window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            hyper: TrainHyper::default(),
            iterations: 2000,
            checkpoint_every: 500,
            data_dir: PathBuf::from("data"),
            strategy: StrategyKind::Sliding,
            tile: 512,
            effective: DEFAULT_EFFECTIVE,
            window: DEFAULT_WINDOW,
        }
    }
}

/// Every accepted key, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: [&str; 21] = [
    "seed",
    "base_channels",
    "residual_blocks",
    "disc_base_channels",
    "disc_layers",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "lambda_cycle",
    "lambda_identity",
    "batch_per_worker",
    "workers",
    "pool_capacity",
    "iterations",
    "checkpoint_every",
    "data_dir",
    "strategy",
    "tile",
    "effective",
    "window",
];

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("invalid value '{value}' for '{key}'"))
}

impl RunConfig {
    /// Sets one key. Errors are plain messages without location.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let h = &mut self.hyper;
        match key {
            "seed" => h.seed = parse(key, value)?,
            "base_channels" => self.generator.base_channels = parse(key, value)?,
            "residual_blocks" => self.generator.n_residual_blocks = parse(key, value)?,
            "disc_base_channels" => self.discriminator.base_channels = parse(key, value)?,
            "disc_layers" => self.discriminator.n_layers = parse(key, value)?,
            "lr" => h.lr = parse(key, value)?,
            "beta1" => h.beta1 = parse(key, value)?,
            "beta2" => h.beta2 = parse(key, value)?,
            "adam_eps" => h.adam_eps = parse(key, value)?,
            "lambda_cycle" => h.lambda_cycle = parse(key, value)?,
            "lambda_identity" => h.lambda_identity = parse(key, value)?,
            "batch_per_worker" => h.batch_per_worker = parse(key, value)?,
            "workers" => h.workers = parse(key, value)?,
            "pool_capacity" => h.pool_capacity = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "strategy" => self.strategy = value.parse().map_err(|e: Error| e.to_string())?,
            "tile" => self.tile = parse(key, value)?,
            "effective" => self.effective = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Parses a config on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!("line {}: expected 'key = value', got '{line}'", i + 1));
                continue;
            };
            if let Err(e) = cfg.set(key.trim(), value.trim()) {
                errors.push(format!("line {}: {e}", i + 1));
            }
        }
        if !errors.is_empty() {
            return Err(Error::ConfigLines(errors));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.hyper.validate()?;
        self.inference_strategy_shape()?;
        Ok(())
    }

    fn inference_strategy_shape(&self) -> Result<()> {
        InferenceStrategy::Sliding { effective: self.effective, window: self.window }.validate()?;
        if self.tile == 0 {
            return Err(Error::Config("tile must be >= 1".into()));
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        let h = &self.hyper;
        match key {
            "seed" => h.seed.to_string(),
            "base_channels" => self.generator.base_channels.to_string(),
            "residual_blocks" => self.generator.n_residual_blocks.to_string(),
            "disc_base_channels" => self.discriminator.base_channels.to_string(),
            "disc_layers" => self.discriminator.n_layers.to_string(),
            "lr" => h.lr.to_string(),
            "beta1" => h.beta1.to_string(),
            "beta2" => h.beta2.to_string(),
            "adam_eps" => h.adam_eps.to_string(),
            "lambda_cycle" => h.lambda_cycle.to_string(),
            "lambda_identity" => h.lambda_identity.to_string(),
            "batch_per_worker" => h.batch_per_worker.to_string(),
            "workers" => h.workers.to_string(),
            "pool_capacity" => h.pool_capacity.to_string(),
            "iterations" => self.iterations.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "data_dir" => self.data_dir.display().to_string(),
            "strategy" => self.strategy.to_string(),
            "tile" => self.tile.to_string(),
            "effective" => self.effective.to_string(),
            "window" => self.window.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Fully resolved config; parsing it yields `self` again.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.value_of(key));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn values_and_comments() {
        let c = RunConfig::parse("# toy run\nseed = 7\n\nworkers=3\nstrategy = naive\nlr = 1e-3\n").unwrap();
        assert_eq!((c.hyper.seed, c.hyper.workers, c.strategy), (7, 3, StrategyKind::Naive));
        assert_eq!(c.hyper.lr, 1e-3);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = RunConfig::parse("seed = 1\nsed = 2\nworkers = many\nnonsense\n").unwrap_err();
        let Error::ConfigLines(lines) = err else { panic!("{err}") };
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("line 2:") && lines[0].contains("unknown key 'sed'"));
        assert!(lines[1].starts_with("line 3:"));
        assert!(lines[2].starts_with("line 4:"));
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(RunConfig::parse("residual_blocks = 0").is_err());
        assert!(RunConfig::parse("effective = 512\nwindow = 128").is_err());
    }
}
