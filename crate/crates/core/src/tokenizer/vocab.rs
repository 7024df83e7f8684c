//! Joint vocabulary: reserved ids, then speech subwords, then text subwords.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bpe::SubwordModel;
use super::kmeans::deduplicate;
use crate::error::{Error, Result};
use crate::model::ComposedSequence;
use crate::tokens::{BOS, EOS, NUM_SPECIAL, PAD, SPEECH};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// Subwords over de-duplicated cluster indices.
    pub speech: SubwordModel,
    /// Subwords over Unicode scalar values of the transcript.
    pub text: SubwordModel,
}

impl Vocabulary {
    pub fn new(speech: SubwordModel, text: SubwordModel) -> Self {
        Self { speech, text }
    }

    pub fn speech_range(&self) -> Range<u32> {
        NUM_SPECIAL..NUM_SPECIAL + self.speech.vocab_size() as u32
    }

    pub fn text_range(&self) -> Range<u32> {
        let start = self.speech_range().end;
        start..start + self.text.vocab_size() as u32
    }

    pub fn size(&self) -> usize {
        self.text_range().end as usize
    }

    pub fn is_speech(&self, id: u32) -> bool {
        self.speech_range().contains(&id)
    }

    pub fn is_text(&self, id: u32) -> bool {
        self.text_range().contains(&id)
    }

    /// Token ids the decoder may emit: every text subword plus `<EOS>`.
    pub fn decode_candidates(&self) -> Vec<u32> {
        std::iter::once(EOS).chain(self.text_range()).collect()
    }

    /// Raw cluster indices → de-duplicated speech subword ids.
    pub fn encode_speech(&self, clusters: &[u32]) -> Result<Vec<u32>> {
        let offset = self.speech_range().start;
        Ok(self
            .speech
            .encode(&deduplicate(clusters))?
            .into_iter()
            .map(|s| s + offset)
            .collect())
    }

    pub fn encode_text(&self, text: &str) -> Result<Vec<u32>> {
        let offset = self.text_range().start;
        Ok(self
            .text
            .encode(&text_symbols(text))?
            .into_iter()
            .map(|s| s + offset)
            .collect())
    }

    /// Inverse of [`Self::encode_text`]; rejects non-text ids.
    pub fn decode_text(&self, ids: &[u32]) -> Result<String> {
        let range = self.text_range();
        let mut local = Vec::with_capacity(ids.len());
        for &id in ids {
            if !range.contains(&id) {
                return Err(Error::InvalidToken {
                    id,
                    vocab: self.size(),
                });
            }
            local.push(id - range.start);
        }
        let symbols = self.text.decode(&local)?;
        symbols
            .into_iter()
            .map(|s| char::from_u32(s).ok_or(Error::UnknownSymbol(s)))
            .collect()
    }

    /// Human-readable form of a single id.
    pub fn surface(&self, id: u32) -> Result<String> {
        let bad = || Error::InvalidToken {
            id,
            vocab: self.size(),
        };
        match id {
            PAD => Ok("<PAD>".into()),
            SPEECH => Ok("<Speech>".into()),
            BOS => Ok("<BOS>".into()),
            EOS => Ok("<EOS>".into()),
            _ if self.is_speech(id) => {
                let e = self
                    .speech
                    .expansion(id - self.speech_range().start)
                    .ok_or_else(bad)?;
                let parts: Vec<String> = e.iter().map(u32::to_string).collect();
                Ok(format!("<s:{}>", parts.join("_")))
            }
            _ if self.is_text(id) => self.decode_text(&[id]),
            _ => Err(bad()),
        }
    }

    /// SHA-256 of the canonical JSON form, used to tie checkpoints to a vocabulary.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("vocabulary serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn text_symbols(text: &str) -> Vec<u32> {
    text.chars().map(u32::from).collect()
}

/// `[<Speech>, speech.., <BOS>, text.., <EOS>]` after checking that every id
/// lies in its range.
pub fn compose_sequence(speech: &[u32], text: &[u32], vocab: &Vocabulary) -> Result<ComposedSequence> {
    let size = vocab.size();
    if let Some(&bad) = speech.iter().find(|&&t| !vocab.is_speech(t)) {
        return Err(Error::InvalidToken { id: bad, vocab: size });
    }
    if let Some(&bad) = text.iter().find(|&&t| !vocab.is_text(t)) {
        return Err(Error::InvalidToken { id: bad, vocab: size });
    }
    ComposedSequence::new(speech, text)
}
