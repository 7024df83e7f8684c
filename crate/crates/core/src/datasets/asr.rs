//! Synthetic token-level ASR: each character emits a run of noisy cluster
//! ids, mimicking the repetition and substitution structure of quantized
//! speech features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::CorpusRecord;
use crate::error::{Error, Result};
use crate::model::ComposedSequence;
use crate::tokenizer::{bpe_train, compose_sequence, deduplicate, text_symbols, Vocabulary};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticAsrConfig {
    pub n: usize,
    /// Inclusive range of text lengths in characters.
    pub text_len: (usize, usize),
    /// Character `alphabet[i]` maps to base cluster `i`.
    pub alphabet: Vec<char>,
    /// Total cluster count `K`; noise frames draw uniformly from `0..K`.
    pub n_clusters: usize,
    /// Each character emits between 1 and `max_rep` frames.
    pub max_rep: usize,
    pub p_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticAsrConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            text_len: (10, 30),
            alphabet: ('a'..='z').collect(),
            n_clusters: 32,
            max_rep: 3,
            p_noise: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticAsrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphabet.len() < 2 {
            return Err(Error::Config("synthetic ASR needs at least two characters".into()));
        }
        let mut sorted = self.alphabet.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.alphabet.len() {
            return Err(Error::Config("alphabet characters must be distinct".into()));
        }
        if self.n_clusters < self.alphabet.len() {
            return Err(Error::Config(format!(
                "{} clusters cannot host {} characters injectively",
                self.n_clusters,
                self.alphabet.len()
            )));
        }
        if self.max_rep == 0 {
            return Err(Error::Config("max_rep must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_noise) {
            return Err(Error::Config(format!("p_noise {} not in [0, 1]", self.p_noise)));
        }
        if self.text_len.0 > self.text_len.1 {
            return Err(Error::Config("text length range is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticAsrInstance {
    pub id: String,
    pub text: String,
    /// Raw cluster id per frame.
    pub frames: Vec<u32>,
}

impl From<SyntheticAsrInstance> for CorpusRecord {
    fn from(i: SyntheticAsrInstance) -> Self {
        CorpusRecord {
            id: i.id,
            speech_ids: i.frames,
            text: i.text,
        }
    }
}

/// Text without adjacent repeated characters, so that de-duplicated clean
/// frames spell the text exactly.
fn sample_text<R: Rng>(cfg: &SyntheticAsrConfig, rng: &mut R) -> Vec<usize> {
    let len = rng.gen_range(cfg.text_len.0..=cfg.text_len.1);
    let a = cfg.alphabet.len();
    let mut out: Vec<usize> = Vec::with_capacity(len);
    for _ in 0..len {
        let c = match out.last() {
            None => rng.gen_range(0..a),
            Some(&prev) => (prev + rng.gen_range(1..a)) % a,
        };
        out.push(c);
    }
    out
}

/// Frames for a character sequence given as alphabet indices.
pub fn emit_frames<R: Rng>(chars: &[usize], cfg: &SyntheticAsrConfig, rng: &mut R) -> Vec<u32> {
    let mut frames = Vec::with_capacity(chars.len() * (1 + cfg.max_rep) / 2);
    for &c in chars {
        let reps = rng.gen_range(1..=cfg.max_rep);
        for _ in 0..reps {
            let id = if cfg.p_noise > 0.0 && rng.gen::<f64>() < cfg.p_noise {
                rng.gen_range(0..cfg.n_clusters)
            } else {
                c
            };
            frames.push(id as u32);
        }
    }
    frames
}

pub fn gen_synthetic_asr(cfg: &SyntheticAsrConfig) -> Result<Vec<SyntheticAsrInstance>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = cfg.n.max(1).to_string().len();
    let mut out = Vec::with_capacity(cfg.n);
    for k in 0..cfg.n {
        let chars = sample_text(cfg, &mut rng);
        let frames = emit_frames(&chars, cfg, &mut rng);
        out.push(SyntheticAsrInstance {
            id: format!("utt{k:0width$}"),
            text: chars.iter().map(|&c| cfg.alphabet[c]).collect(),
            frames,
        });
    }
    Ok(out)
}

/// Learn speech subwords over de-duplicated frames and text subwords over
/// characters.
pub fn build_vocabulary(
    records: &[CorpusRecord],
    speech_vocab: usize,
    text_vocab: usize,
) -> Result<Vocabulary> {
    if records.is_empty() {
        return Err(Error::Domain("cannot build a vocabulary from an empty corpus".into()));
    }
    let speech: Vec<Vec<u32>> = records.iter().map(|r| deduplicate(&r.speech_ids)).collect();
    let text: Vec<Vec<u32>> = records.iter().map(|r| text_symbols(&r.text)).collect();
    let speech_alpha = distinct(&speech);
    let text_alpha = distinct(&text);
    Ok(Vocabulary::new(
        bpe_train(&speech, speech_vocab.max(speech_alpha))?,
        bpe_train(&text, text_vocab.max(text_alpha))?,
    ))
}

fn distinct(seqs: &[Vec<u32>]) -> usize {
    let mut all: Vec<u32> = seqs.iter().flatten().copied().collect();
    all.sort_unstable();
    all.dedup();
    all.len()
}

/// Full pipeline for one record: dedup, subwords, composition.
pub fn encode_record(record: &CorpusRecord, vocab: &Vocabulary) -> Result<ComposedSequence> {
    let speech = vocab.encode_speech(&record.speech_ids)?;
    let text = vocab.encode_text(&record.text)?;
    compose_sequence(&speech, &text, vocab)
}
