use serde::{Deserialize, Serialize};

use crate::blocks::BlockConfig;
use crate::error::{Error, Result};
use crate::ssm::SsmVariant;
use crate::tokens::NUM_SPECIAL;

/// How the speech prefix is processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrefixMode {
    /// Plain causal decoder.
    #[default]
    None,
    /// Speech reversal between consecutive unidirectional blocks.
    Serial,
    /// Every block adds a backward branch over the speech span.
    Parallel,
}

impl PrefixMode {
    pub const ALL: [PrefixMode; 3] = [PrefixMode::None, PrefixMode::Serial, PrefixMode::Parallel];

    pub fn as_str(self) -> &'static str {
        match self {
            PrefixMode::None => "none",
            PrefixMode::Serial => "serial",
            PrefixMode::Parallel => "parallel",
        }
    }
}

impl std::str::FromStr for PrefixMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PrefixMode::None),
            "serial" => Ok(PrefixMode::Serial),
            "parallel" => Ok(PrefixMode::Parallel),
            other => Err(Error::Config(format!("unknown prefix mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for PrefixMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_blocks: usize,
    pub m_in: usize,
    pub m_inner: usize,
    pub state_size: usize,
    pub conv_width: usize,
    /// Mamba-2 heads `I`.
    pub heads: usize,
    /// Mamba-2 head width `J`.
    pub head_dim: usize,
    pub ssm_variant: SsmVariant,
    pub prefix_mode: PrefixMode,
    /// Total vocabulary including the reserved ids. Zero means "take it from
    /// the vocabulary file".
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub embed_mask_prob: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_blocks: 16,
            m_in: 384,
            m_inner: 1536,
            state_size: 16,
            conv_width: 4,
            heads: 24,
            head_dim: 64,
            ssm_variant: SsmVariant::Mamba,
            prefix_mode: PrefixMode::None,
            vocab_size: 0,
            max_seq_len: 4096,
            embed_mask_prob: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_blocks == 0 {
            return fail("n_blocks must be at least 1".into());
        }
        if self.m_in == 0 || self.m_inner == 0 {
            return fail("m_in and m_inner must be positive".into());
        }
        if self.state_size == 0 {
            return fail("state_size must be positive".into());
        }
        if self.conv_width == 0 {
            return fail("conv_width must be at least 1".into());
        }
        if self.vocab_size <= NUM_SPECIAL as usize {
            return fail(format!(
                "vocab_size {} leaves no room beyond the {NUM_SPECIAL} reserved ids",
                self.vocab_size
            ));
        }
        if self.max_seq_len == 0 {
            return fail("max_seq_len must be positive".into());
        }
        if !(0.0..1.0).contains(&self.embed_mask_prob) {
            return fail(format!("embed_mask_prob {} not in [0, 1)", self.embed_mask_prob));
        }
        if self.ssm_variant == SsmVariant::Mamba2 && self.heads * self.head_dim != self.m_inner {
            return fail(format!(
                "mamba2 needs heads * head_dim == m_inner ({} * {} != {})",
                self.heads, self.head_dim, self.m_inner
            ));
        }
        if self.halves_state() && self.state_size < 2 {
            return fail("parallel mamba needs state_size >= 2 to split across directions".into());
        }
        Ok(())
    }

    /// Parallel speech prefixing with Mamba splits the state budget across
    /// the two directions.
    pub fn halves_state(&self) -> bool {
        self.prefix_mode == PrefixMode::Parallel && self.ssm_variant == SsmVariant::Mamba
    }

    pub fn block_config(&self) -> BlockConfig {
        BlockConfig {
            model_dim: self.m_in,
            inner_dim: self.m_inner,
            state_size: if self.halves_state() {
                self.state_size / 2
            } else {
                self.state_size
            },
            conv_width: self.conv_width,
            variant: self.ssm_variant,
            heads: self.heads,
            head_dim: self.head_dim,
            parallel_sp: self.prefix_mode == PrefixMode::Parallel,
        }
    }

    /// Key/value pairs in a fixed order, used for checkpoint headers.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_blocks", self.n_blocks.to_string()),
            ("m_in", self.m_in.to_string()),
            ("m_inner", self.m_inner.to_string()),
            ("state_size", self.state_size.to_string()),
            ("conv_width", self.conv_width.to_string()),
            ("heads", self.heads.to_string()),
            ("head_dim", self.head_dim.to_string()),
            ("ssm_variant", self.ssm_variant.to_string()),
            ("prefix_mode", self.prefix_mode.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("max_seq_len", self.max_seq_len.to_string()),
            ("embed_mask_prob", format!("{:?}", self.embed_mask_prob)),
        ]
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        fn num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| Error::Format(format!("bad value {value:?} for {key}")))
        }
        let mut cfg = ModelConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (key, value) in pairs {
            match key {
                "n_blocks" => cfg.n_blocks = num(key, value)?,
                "m_in" => cfg.m_in = num(key, value)?,
                "m_inner" => cfg.m_inner = num(key, value)?,
                "state_size" => cfg.state_size = num(key, value)?,
                "conv_width" => cfg.conv_width = num(key, value)?,
                "heads" => cfg.heads = num(key, value)?,
                "head_dim" => cfg.head_dim = num(key, value)?,
                "ssm_variant" => cfg.ssm_variant = value.parse()?,
                "prefix_mode" => cfg.prefix_mode = value.parse()?,
                "vocab_size" => cfg.vocab_size = num(key, value)?,
                "max_seq_len" => cfg.max_seq_len = num(key, value)?,
                "embed_mask_prob" => cfg.embed_mask_prob = num(key, value)?,
                _ => continue,
            }
            seen.insert(key);
        }
        for (key, _) in cfg.to_pairs() {
            if !seen.contains(key) {
                return Err(Error::Format(format!("missing model field {key}")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
