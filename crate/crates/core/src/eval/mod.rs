//! Edit-distance metrics and the position-wise error profile.

mod profile;

pub use profile::{position_profile, ErrorProfile};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditOp {
    Match,
    Substitute,
    /// A reference token missing from the hypothesis.
    Delete,
    /// A hypothesis token with no reference counterpart.
    Insert,
}

impl EditOp {
    /// Whether this op consumes a reference token.
    pub fn consumes_reference(self) -> bool {
        !matches!(self, EditOp::Insert)
    }

    pub fn is_error(self) -> bool {
        !matches!(self, EditOp::Match)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    pub distance: usize,
    /// Ops in reference order.
    pub ops: Vec<EditOp>,
}

impl Alignment {
    pub fn count(&self, op: EditOp) -> usize {
        self.ops.iter().filter(|&&o| o == op).count()
    }
}

/// Unit-cost Levenshtein distance with one optimal alignment. The backtrace
/// prefers substitution, then deletion, then insertion.
pub fn edit_distance<S: PartialEq>(reference: &[S], hyp: &[S]) -> Alignment {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut dp = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        dp[i * w] = i;
        for j in 1..=m {
            let sub = dp[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = dp[(i - 1) * w + j] + 1;
            let ins = dp[i * w + j - 1] + 1;
            dp[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hyp[j - 1];
            if dp[(i - 1) * w + j - 1] + usize::from(!same) == here {
                ops.push(if same { EditOp::Match } else { EditOp::Substitute });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * w + j] + 1 == here {
            ops.push(EditOp::Delete);
            i -= 1;
        } else {
            ops.push(EditOp::Insert);
            j -= 1;
        }
    }
    ops.reverse();
    Alignment {
        distance: dp[n * w + m],
        ops,
    }
}

/// Corpus-level error counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ErrorCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_len: usize,
}

impl ErrorCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn rate(&self) -> Result<f64> {
        if self.reference_len == 0 {
            return Err(Error::Domain("total reference length is zero".into()));
        }
        Ok(self.errors() as f64 / self.reference_len as f64)
    }

    fn add(&mut self, reference_len: usize, a: &Alignment) {
        self.reference_len += reference_len;
        self.substitutions += a.count(EditOp::Substitute);
        self.deletions += a.count(EditOp::Delete);
        self.insertions += a.count(EditOp::Insert);
    }
}

/// Accumulate alignments over paired token sequences.
pub fn error_counts<S: PartialEq>(refs: &[Vec<S>], hyps: &[Vec<S>]) -> Result<ErrorCounts> {
    if refs.len() != hyps.len() {
        return Err(Error::Domain(format!(
            "{} references but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let mut c = ErrorCounts::default();
    for (r, h) in refs.iter().zip(hyps) {
        c.add(r.len(), &edit_distance(r, h));
    }
    Ok(c)
}

pub fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

pub fn chars(s: &str) -> Vec<char> {
    s.chars().collect()
}

/// Word error rate: total edits over total reference words.
pub fn wer<S: AsRef<str>>(refs: &[S], hyps: &[S]) -> Result<f64> {
    let r: Vec<Vec<&str>> = refs.iter().map(|s| words(s.as_ref())).collect();
    let h: Vec<Vec<&str>> = hyps.iter().map(|s| words(s.as_ref())).collect();
    error_counts(&r, &h)?.rate()
}

/// Character error rate over every character, spaces included.
pub fn cer<S: AsRef<str>>(refs: &[S], hyps: &[S]) -> Result<f64> {
    let r: Vec<Vec<char>> = refs.iter().map(|s| chars(s.as_ref())).collect();
    let h: Vec<Vec<char>> = hyps.iter().map(|s| chars(s.as_ref())).collect();
    error_counts(&r, &h)?.rate()
}

/// Unweighted mean of per-utterance rates. Differs from [`wer`] whenever
/// utterance lengths differ; reported only for comparison.
pub fn mean_utterance_wer<S: AsRef<str>>(refs: &[S], hyps: &[S]) -> Result<f64> {
    if refs.len() != hyps.len() || refs.is_empty() {
        return Err(Error::Domain("need equally many, non-zero references and hypotheses".into()));
    }
    let mut total = 0.0;
    for (r, h) in refs.iter().zip(hyps) {
        total += wer(&[r.as_ref()], &[h.as_ref()])?;
    }
    Ok(total / refs.len() as f64)
}

#[cfg(test)]
mod tests;
