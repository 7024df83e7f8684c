use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use madeon::model::{ModelConfig, PrefixMode};
use madeon::ssm::SsmVariant;
use madeon::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::usage;

/// Effective configuration of a run: the JSON file (if any) with command-line
/// overrides applied on top.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub decode: DecodeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    /// k-means cluster count when tokenizing features.
    pub clusters: usize,
    pub kmeans_iters: usize,
    /// Target subword vocabulary sizes.
    pub speech_vocab: usize,
    pub text_vocab: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            valid: None,
            vocab: None,
            clusters: 32,
            kmeans_iters: 50,
            speech_vocab: 256,
            text_vocab: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam: usize,
    pub greedy: bool,
    pub max_len: usize,
    /// Exponent `α` of the length normalization `log p / steps^α`.
    pub length_penalty: f64,
    pub buckets: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam: 4,
            greedy: false,
            max_len: 256,
            length_penalty: 0.0,
            buckets: 10,
        }
    }
}

/// Flags shared by every subcommand that reads a config; `None` leaves the
/// file value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub ssm: Option<SsmVariant>,
    pub prefix: Option<PrefixMode>,
    pub beam: Option<usize>,
    pub max_len: Option<usize>,
    pub buckets: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .map_err(|e| usage(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        cfg.apply(overrides);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.train.seed = s;
        }
        if let Some(v) = o.ssm {
            self.model.ssm_variant = v;
        }
        if let Some(p) = o.prefix {
            self.model.prefix_mode = p;
        }
        if let Some(b) = o.beam {
            self.decode.beam = b;
        }
        if let Some(m) = o.max_len {
            self.decode.max_len = m;
        }
        if let Some(b) = o.buckets {
            self.decode.buckets = b;
        }
    }

    pub fn validate_decode(&self) -> Result<()> {
        let d = &self.decode;
        if d.beam == 0 || d.max_len == 0 || d.buckets == 0 {
            return Err(usage("decode.beam, decode.max_len and decode.buckets must be at least 1"));
        }
        if !d.length_penalty.is_finite() || d.length_penalty < 0.0 {
            return Err(usage("decode.length_penalty must be a non-negative number"));
        }
        Ok(())
    }

    pub fn validate_train(&self) -> Result<()> {
        self.train.validate().map_err(|e| usage(e.to_string()))
    }
}
