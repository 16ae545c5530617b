//! `key = value` run configuration with flag overrides.
//!
//! One assignment per line, `#` starts a comment. Every key must be on the
//! known-key list so typos fail loudly instead of silently using defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ganmt_core::error::{Error, Result};
use ganmt_core::model::ModelConfig;
use ganmt_core::training::{Divergence, LossWeights, TrainConfig};

const KNOWN_KEYS: [&str; 29] = [
    "model.embed_dim",
    "model.cell_dim",
    "model.src_vocab_size",
    "model.tgt_vocab_size",
    "model.topic_dim",
    "model.maxout_pieces",
    "model.use_topic",
    "train.batch_size",
    "train.max_epochs",
    "train.checkpoint_every",
    "train.seed",
    "train.w1",
    "train.w2",
    "train.decay",
    "train.divergence",
    "train.guided",
    "train.topic",
    "train.rho",
    "train.epsilon",
    "train.beam",
    "train.keep_checkpoints",
    "data.src",
    "data.tgt",
    "data.align",
    "data.topics",
    "data.dev_src",
    "data.dev_tgt",
    "data.dev_topics",
    "out.dir",
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut values = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            for (no, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| Error::format(no, format!("expected `key = value`, got `{line}`")))?;
                Self::insert_checked(&mut values, key.trim(), value.trim(), Some(no))?;
            }
        }
        for item in overrides {
            let (key, value) = item.split_once('=').ok_or_else(|| {
                Error::Config(format!("--set expects key=value, got `{item}`"))
            })?;
            Self::insert_checked(&mut values, key.trim(), value.trim(), None)?;
        }
        Ok(RunConfig { values })
    }

    fn insert_checked(
        values: &mut BTreeMap<String, String>,
        key: &str,
        value: &str,
        line: Option<usize>,
    ) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            let msg = format!("unknown configuration key `{key}`");
            return Err(match line {
                Some(no) => Error::format(no, msg),
                None => Error::Config(msg),
            });
        }
        values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn str_opt(&self, key: &str) -> Option<&str> {
        debug_assert!(KNOWN_KEYS.contains(&key));
        self.values.get(key).map(String::as_str)
    }

    pub fn path_opt(&self, key: &str) -> Option<PathBuf> {
        self.str_opt(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path_opt(key)
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::Config(format!("bad value `{raw}` for `{key}`"))),
        }
    }

    fn parse_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.values.get(key).map(String::as_str) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(raw) => Err(Error::Config(format!("bad boolean `{raw}` for `{key}`"))),
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let config = ModelConfig {
            embed_dim: self.parse("model.embed_dim", 620)?,
            cell_dim: self.parse("model.cell_dim", 1000)?,
            src_vocab_size: self.parse("model.src_vocab_size", 50_000)?,
            tgt_vocab_size: self.parse("model.tgt_vocab_size", 50_000)?,
            topic_dim: self.parse("model.topic_dim", 0)?,
            maxout_pieces: self.parse("model.maxout_pieces", 2)?,
            use_topic: self.parse_bool("model.use_topic", false)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let divergence = match self.str_opt("train.divergence").unwrap_or("ce") {
            "ce" | "cross_entropy" => Divergence::CrossEntropy,
            "mse" | "squared_error" => Divergence::SquaredError,
            other => {
                return Err(Error::Config(format!(
                    "train.divergence must be ce or mse, got `{other}`"
                )))
            }
        };
        let config = TrainConfig {
            batch_size: self.parse("train.batch_size", 100)?,
            max_epochs: self.parse("train.max_epochs", 10)?,
            checkpoint_every: self.parse("train.checkpoint_every", 1000)?,
            seed: self.parse("train.seed", 1)?,
            weights: LossWeights {
                w1: self.parse("train.w1", 1.0)?,
                w2: self.parse("train.w2", 1.0)?,
                decay_factor: self.parse("train.decay", 1.0)?,
                divergence,
            },
            guided: self.parse_bool("train.guided", false)?,
            topic: self.parse_bool("train.topic", false)?,
            adadelta_rho: self.parse("train.rho", 0.95)?,
            adadelta_epsilon: self.parse("train.epsilon", 1e-6)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn beam(&self) -> Result<usize> {
        self.parse("train.beam", 10)
    }

    pub fn keep_checkpoints(&self) -> Result<usize> {
        self.parse("train.keep_checkpoints", 30)
    }
}
