//! Flat `key = value` pipeline configuration with per-key overrides.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments
//! win, so command-line overrides are applied with [`PipelineConfig::set`]
//! after loading a file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::attribution::DEFAULT_STEPS;
use crate::graphlime::GraphLimeConfig;
use crate::pipeline::PrepareOptions;
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value {value:?} for {key}: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub nodes: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub explainer: GraphLimeConfig,
    pub ig_steps: usize,
    pub prepare: PrepareOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            nodes: None,
            edges: None,
            splits: None,
            embeddings: None,
            checkpoint: None,
            output_dir: None,
            train: TrainConfig::default(),
            seeds: (0..5).collect(),
            explainer: GraphLimeConfig::default(),
            ig_steps: DEFAULT_STEPS,
            prepare: PrepareOptions::default(),
        }
    }
}

pub const KEYS: [&str; 25] = [
    "nodes",
    "edges",
    "splits",
    "embeddings",
    "checkpoint",
    "output_dir",
    "learning_rate",
    "epochs",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "seed",
    "mode",
    "seeds",
    "hops",
    "sigma_x",
    "sigma_y",
    "rho",
    "min_samples",
    "ig_steps",
    "couser_cap",
    "shallow_transform",
    "conflict_policy",
    "fallback_encoder",
    "language",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected true or false".into(),
        }),
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        config.apply(text)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies every assignment in `text` on top of the current values.
    pub fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Parses a single `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (key, value) = pair.split_once('=').ok_or(ConfigError::Syntax { line: 1 })?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let path = || Some(PathBuf::from(value));
        match key {
            "nodes" => self.nodes = path(),
            "edges" => self.edges = path(),
            "splits" => self.splits = path(),
            "embeddings" => self.embeddings = path(),
            "checkpoint" => self.checkpoint = path(),
            "output_dir" => self.output_dir = path(),
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "adam_beta1" => self.train.beta1 = parse(key, value)?,
            "adam_beta2" => self.train.beta2 = parse(key, value)?,
            "adam_epsilon" => self.train.epsilon = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "mode" => self.train.mode = parse(key, value)?,
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            "hops" => self.explainer.hops = parse(key, value)?,
            "sigma_x" => self.explainer.sigma_x = parse(key, value)?,
            "sigma_y" => self.explainer.sigma_y = parse(key, value)?,
            "rho" => self.explainer.rho = parse(key, value)?,
            "min_samples" => self.explainer.min_samples = parse(key, value)?,
            "ig_steps" => self.ig_steps = parse(key, value)?,
            "couser_cap" => self.prepare.couser_cap = parse(key, value)?,
            "shallow_transform" => self.prepare.transform = parse(key, value)?,
            "conflict_policy" => self.prepare.conflict_policy = parse(key, value)?,
            "fallback_encoder" => self.prepare.fallback_encoder = parse_bool(key, value)?,
            "language" => {
                self.prepare.language = match value {
                    "" | "any" => None,
                    lang => Some(lang.to_string()),
                }
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gat::Mode;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.train.learning_rate, 0.005);
        assert_eq!(c.train.epochs, 800);
        assert_eq!(c.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.explainer.hops, 2);
        assert_eq!(c.explainer.rho, 0.1);
        assert_eq!(c.ig_steps, 50);
        assert_eq!(c.prepare.couser_cap, 10);
    }

    #[test]
    fn file_then_override() {
        let mut c = PipelineConfig::parse("# comment\n\nepochs = 20\nmode = text\nseeds = 3, 4\n").unwrap();
        assert_eq!(c.train.epochs, 20);
        assert_eq!(c.train.mode, Mode::TextOnly);
        assert_eq!(c.seeds, vec![3, 4]);
        c.set_pair("epochs=5").unwrap();
        assert_eq!(c.train.epochs, 5);
        c.set("language", "any").unwrap();
        assert_eq!(c.prepare.language, None);
    }

    #[test]
    fn errors() {
        assert!(matches!(PipelineConfig::parse("epochs"), Err(ConfigError::Syntax { line: 1 })));
        assert!(matches!(PipelineConfig::parse("colour = red"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(
            PipelineConfig::parse("epochs = many"),
            Err(ConfigError::InvalidValue { .. })
        ));
    }

    #[test]
    fn every_key_is_accepted() {
        let samples = [
            ("learning_rate", "0.01"),
            ("epochs", "3"),
            ("adam_beta1", "0.8"),
            ("adam_beta2", "0.99"),
            ("adam_epsilon", "1e-7"),
            ("seed", "9"),
            ("mode", "graph"),
            ("seeds", "1"),
            ("hops", "3"),
            ("sigma_x", "2"),
            ("sigma_y", "2"),
            ("rho", "0.2"),
            ("min_samples", "4"),
            ("ig_steps", "10"),
            ("couser_cap", "0"),
            ("shallow_transform", "raw"),
            ("conflict_policy", "majority"),
            ("fallback_encoder", "false"),
            ("language", "en"),
        ];
        let mut c = PipelineConfig::default();
        for key in KEYS {
            let value = samples.iter().find(|(k, _)| *k == key).map_or("x", |(_, v)| v);
            c.set(key, value).unwrap();
        }
    }
}
