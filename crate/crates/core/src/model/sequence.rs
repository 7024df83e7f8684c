use crate::blocks::PrefixLayout;
use crate::error::{Error, Result};
use crate::tokens::{BOS, EOS, NUM_SPECIAL, SPEECH};

/// `[<Speech>, o_1..o_S, <BOS>, w_1..w_T, <EOS>]` with its reversible span
/// and the positions whose next token is scored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComposedSequence {
    pub ids: Vec<u32>,
    pub layout: PrefixLayout,
    /// `loss_mask[l]` is true when `ids[l + 1]` is a text token or `<EOS>`.
    pub loss_mask: Vec<bool>,
}

/// The conditioning prefix `[<Speech>, speech.., <BOS>]`.
pub fn speech_prefix(speech: &[u32]) -> Vec<u32> {
    let mut ids = Vec::with_capacity(speech.len() + 2);
    ids.push(SPEECH);
    ids.extend_from_slice(speech);
    ids.push(BOS);
    ids
}

/// Layout of the speech span inside a prefix ending at `<BOS>`.
pub fn prefix_layout(prefix: &[u32]) -> Result<PrefixLayout> {
    match (prefix.first(), prefix.last()) {
        (Some(&SPEECH), Some(&BOS)) if prefix.len() >= 2 => {}
        _ => {
            return Err(Error::Domain(
                "a prefix must start with <Speech> and end with <BOS>".into(),
            ))
        }
    }
    let inner = &prefix[1..prefix.len() - 1];
    if let Some(&bad) = inner.iter().find(|&&t| t < NUM_SPECIAL) {
        return Err(Error::Domain(format!(
            "reserved id {bad} inside the speech span"
        )));
    }
    PrefixLayout::new(1, inner.len(), prefix.len())
}

impl ComposedSequence {
    /// Training sequence with a trailing `<EOS>`.
    pub fn new(speech: &[u32], text: &[u32]) -> Result<Self> {
        let mut ids = speech_prefix(speech);
        ids.extend_from_slice(text);
        ids.push(EOS);
        Self::from_ids(ids)
    }

    /// Parse a composed id sequence. `<EOS>` may only appear last.
    pub fn from_ids(ids: Vec<u32>) -> Result<Self> {
        let bos = ids
            .iter()
            .position(|&t| t == BOS)
            .ok_or_else(|| Error::Domain("sequence has no <BOS>".into()))?;
        let layout = prefix_layout(&ids[..=bos])?;
        let text = &ids[bos + 1..];
        for (k, &t) in text.iter().enumerate() {
            let last = k + 1 == text.len();
            if t < NUM_SPECIAL && !(t == EOS && last) {
                return Err(Error::Domain(format!(
                    "reserved id {t} at text position {k}"
                )));
            }
        }
        let len = ids.len();
        let loss_mask = (0..len).map(|l| l >= bos && l + 1 < len).collect();
        Ok(Self {
            layout: layout.with_total(len),
            ids,
            loss_mask,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn bos_position(&self) -> usize {
        self.layout.speech_end()
    }

    pub fn speech(&self) -> &[u32] {
        &self.ids[self.layout.speech_start..self.layout.speech_end()]
    }

    /// Text tokens without the trailing `<EOS>`.
    pub fn text(&self) -> &[u32] {
        let rest = &self.ids[self.bos_position() + 1..];
        match rest.last() {
            Some(&EOS) => &rest[..rest.len() - 1],
            _ => rest,
        }
    }

    pub fn prefix(&self) -> &[u32] {
        &self.ids[..=self.bos_position()]
    }

    pub fn num_targets(&self) -> usize {
        self.loss_mask.iter().filter(|&&m| m).count()
    }
}
