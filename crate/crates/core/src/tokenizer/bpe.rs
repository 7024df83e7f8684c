//! Byte-pair-style subword model over arbitrary `u32` base symbols.
//!
//! Subword ids are dense: `0..alphabet.len()` are the base symbols in
//! ascending order, and merge `i` creates id `alphabet.len() + i`.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SubwordRepr", into = "SubwordRepr")]
pub struct SubwordModel {
    alphabet: Vec<u32>,
    merges: Vec<(u32, u32)>,
    #[serde(skip)]
    index: HashMap<u32, u32>,
    #[serde(skip)]
    ranks: HashMap<(u32, u32), u32>,
    #[serde(skip)]
    expansions: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct SubwordRepr {
    alphabet: Vec<u32>,
    merges: Vec<(u32, u32)>,
}

impl TryFrom<SubwordRepr> for SubwordModel {
    type Error = Error;

    fn try_from(r: SubwordRepr) -> Result<Self> {
        SubwordModel::from_parts(r.alphabet, r.merges)
    }
}

impl From<SubwordModel> for SubwordRepr {
    fn from(m: SubwordModel) -> Self {
        SubwordRepr {
            alphabet: m.alphabet,
            merges: m.merges,
        }
    }
}

impl SubwordModel {
    /// Rebuild a model from its alphabet and ordered merges.
    pub fn from_parts(mut alphabet: Vec<u32>, merges: Vec<(u32, u32)>) -> Result<Self> {
        let n = alphabet.len();
        alphabet.sort_unstable();
        alphabet.dedup();
        if alphabet.len() != n {
            return Err(Error::Format("subword alphabet has duplicates".into()));
        }
        let index = alphabet
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, i as u32))
            .collect();
        let mut expansions: Vec<Vec<u32>> = alphabet.iter().map(|&s| vec![s]).collect();
        let mut ranks = HashMap::with_capacity(merges.len());
        for (i, &(a, b)) in merges.iter().enumerate() {
            let next = expansions.len() as u32;
            if a >= next || b >= next {
                return Err(Error::Format(format!(
                    "merge {i} refers to an undefined subword ({a}, {b})"
                )));
            }
            if ranks.insert((a, b), i as u32).is_some() {
                return Err(Error::Format(format!("merge {i} repeats ({a}, {b})")));
            }
            let mut e = expansions[a as usize].clone();
            e.extend_from_slice(&expansions[b as usize]);
            expansions.push(e);
        }
        Ok(Self {
            alphabet,
            merges,
            index,
            ranks,
            expansions,
        })
    }

    pub fn alphabet(&self) -> &[u32] {
        &self.alphabet
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    /// Number of subword ids.
    pub fn vocab_size(&self) -> usize {
        self.expansions.len()
    }

    /// Base symbols spelled by subword `id`.
    pub fn expansion(&self, id: u32) -> Option<&[u32]> {
        self.expansions.get(id as usize).map(Vec::as_slice)
    }

    fn to_base_ids(&self, seq: &[u32]) -> Result<Vec<u32>> {
        seq.iter()
            .map(|s| self.index.get(s).copied().ok_or(Error::UnknownSymbol(*s)))
            .collect()
    }

    /// Apply the learned merges in order.
    pub fn encode(&self, seq: &[u32]) -> Result<Vec<u32>> {
        let mut ids = self.to_base_ids(seq)?;
        loop {
            let best = ids
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0], w[1])).copied())
                .min();
            let Some(rank) = best else { break };
            let (a, b) = self.merges[rank as usize];
            ids = apply_merge(&ids, a, b, self.alphabet.len() as u32 + rank);
        }
        Ok(ids)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let e = self.expansion(id).ok_or(Error::InvalidToken {
                id,
                vocab: self.vocab_size(),
            })?;
            out.extend_from_slice(e);
        }
        Ok(out)
    }
}

/// Replace non-overlapping `(a, b)` occurrences left to right.
fn apply_merge(ids: &[u32], a: u32, b: u32, new: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(ids.len());
    let mut i = 0;
    while i < ids.len() {
        if i + 1 < ids.len() && ids[i] == a && ids[i + 1] == b {
            out.push(new);
            i += 2;
        } else {
            out.push(ids[i]);
            i += 1;
        }
    }
    out
}

fn count_pairs(seq: &[u32], counts: &mut HashMap<(u32, u32), i64>, sign: i64) {
    for w in seq.windows(2) {
        *counts.entry((w[0], w[1])).or_insert(0) += sign;
    }
}

/// Learn merges until `target_vocab` subwords exist or no pair occurs twice.
///
/// Each round merges the most frequent adjacent pair (overlapping
/// occurrences counted); ties go to the smallest `(left, right)` id pair.
pub fn bpe_train(corpus: &[Vec<u32>], target_vocab: usize) -> Result<SubwordModel> {
    let mut alphabet: Vec<u32> = corpus.iter().flatten().copied().collect::<HashSet<_>>().into_iter().collect();
    alphabet.sort_unstable();
    if target_vocab < alphabet.len() {
        return Err(Error::Domain(format!(
            "target vocabulary {target_vocab} is smaller than the alphabet ({})",
            alphabet.len()
        )));
    }
    let base = SubwordModel::from_parts(alphabet.clone(), Vec::new())?;
    let mut seqs: Vec<Vec<u32>> = corpus
        .iter()
        .map(|s| base.to_base_ids(s))
        .collect::<Result<_>>()?;

    let mut counts: HashMap<(u32, u32), i64> = HashMap::new();
    let mut where_: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (i, s) in seqs.iter().enumerate() {
        count_pairs(s, &mut counts, 1);
        for w in s.windows(2) {
            where_.entry((w[0], w[1])).or_default().insert(i);
        }
    }

    let mut merges = Vec::new();
    while alphabet.len() + merges.len() < target_vocab {
        let best = counts
            .iter()
            .filter(|(_, &c)| c >= 2)
            .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
            .map(|(&p, _)| p);
        let Some((a, b)) = best else { break };
        let new = (alphabet.len() + merges.len()) as u32;
        merges.push((a, b));
        let mut touched: Vec<usize> = where_.remove(&(a, b)).unwrap_or_default().into_iter().collect();
        touched.sort_unstable();
        for i in touched {
            count_pairs(&seqs[i], &mut counts, -1);
            seqs[i] = apply_merge(&seqs[i], a, b, new);
            count_pairs(&seqs[i], &mut counts, 1);
            for w in seqs[i].windows(2) {
                where_.entry((w[0], w[1])).or_default().insert(i);
            }
        }
        counts.retain(|_, c| *c > 0);
    }
    SubwordModel::from_parts(alphabet, merges)
}
