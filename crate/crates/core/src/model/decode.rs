use super::loss::log_softmax;
use super::network::{Model, StateCache};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tokens::EOS;

/// A (possibly unfinished) transcription.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Emitted tokens, without `<EOS>`.
    pub tokens: Vec<u32>,
    /// Sum of the log-softmax values of every chosen token, `<EOS>` included.
    pub log_prob: f64,
    /// Whether `<EOS>` was emitted.
    pub finished: bool,
}

impl Hypothesis {
    /// Number of decoding steps taken.
    pub fn steps(&self) -> usize {
        self.tokens.len() + usize::from(self.finished)
    }

    /// `log_prob / steps^alpha`.
    pub fn score(&self, length_penalty: f64) -> f64 {
        if length_penalty == 0.0 {
            return self.log_prob;
        }
        self.log_prob / (self.steps().max(1) as f64).powf(length_penalty)
    }
}

/// Sorted, de-duplicated candidate ids, validated against the vocabulary.
fn prepare_candidates(candidates: &[u32], vocab: usize) -> Result<Vec<u32>> {
    let mut c = candidates.to_vec();
    c.sort_unstable();
    c.dedup();
    if c.is_empty() {
        return Err(Error::Domain("no candidate tokens to decode".into()));
    }
    if let Some(&bad) = c.iter().find(|&&t| t as usize >= vocab) {
        return Err(Error::InvalidToken { id: bad, vocab });
    }
    Ok(c)
}

fn log_probs<T: Scalar>(logits: &[T]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(|v| v.as_f64()).collect()
}

/// Pick the most likely candidate at every step until `<EOS>` or `max_len`
/// steps. Ties go to the lowest id.
pub fn greedy_decode<T: Scalar>(
    model: &Model<T>,
    prefix: &[u32],
    candidates: &[u32],
    max_len: usize,
) -> Result<Hypothesis> {
    if max_len == 0 {
        return Err(Error::Domain("max_len must be at least 1".into()));
    }
    let candidates = prepare_candidates(candidates, model.vocab_size())?;
    let (mut cache, logits) = model.prefill(prefix)?;
    let mut lp = log_probs(&logits);
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    for step in 0..max_len {
        let mut best = candidates[0];
        for &t in &candidates[1..] {
            if lp[t as usize] > lp[best as usize] {
                best = t;
            }
        }
        hyp.log_prob += lp[best as usize];
        if best == EOS {
            hyp.finished = true;
            break;
        }
        hyp.tokens.push(best);
        if step + 1 < max_len {
            lp = log_probs(&model.decode_step(best, &mut cache)?);
        }
    }
    Ok(hyp)
}

struct Beam<T> {
    hyp: Hypothesis,
    cache: StateCache<T>,
    next: Vec<f64>,
}

/// Beam search over `candidates`. At every step the `beam_width` best
/// one-token extensions of the live hypotheses survive; those ending in
/// `<EOS>` are set aside as finished. Hypotheses still alive after `max_len`
/// steps are returned unfinished. The result is sorted by
/// `log_prob / steps^length_penalty`, best first.
pub fn beam_search<T: Scalar>(
    model: &Model<T>,
    prefix: &[u32],
    candidates: &[u32],
    beam_width: usize,
    max_len: usize,
    length_penalty: f64,
) -> Result<Vec<Hypothesis>> {
    if beam_width == 0 {
        return Err(Error::Domain("beam width must be at least 1".into()));
    }
    if max_len == 0 {
        return Err(Error::Domain("max_len must be at least 1".into()));
    }
    let candidates = prepare_candidates(candidates, model.vocab_size())?;
    let (cache, logits) = model.prefill(prefix)?;
    let mut alive = vec![Beam {
        hyp: Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        },
        cache,
        next: log_probs(&logits),
    }];
    let mut done = Vec::new();

    for step in 0..max_len {
        if alive.is_empty() {
            break;
        }
        let mut expansions: Vec<(f64, usize, u32)> = Vec::with_capacity(alive.len() * candidates.len());
        for (b, beam) in alive.iter().enumerate() {
            for &t in &candidates {
                expansions.push((beam.hyp.log_prob + beam.next[t as usize], b, t));
            }
        }
        // Stable: equal scores keep beam order, then ascending token id.
        expansions.sort_by(|a, b| b.0.total_cmp(&a.0));
        expansions.truncate(beam_width);

        let mut next_alive = Vec::with_capacity(expansions.len());
        for (score, b, t) in expansions {
            let parent = &alive[b];
            let mut hyp = parent.hyp.clone();
            hyp.log_prob = score;
            if t == EOS {
                hyp.finished = true;
                done.push(hyp);
                continue;
            }
            hyp.tokens.push(t);
            let mut cache = parent.cache.clone();
            let next = if step + 1 < max_len {
                log_probs(&model.decode_step(t, &mut cache)?)
            } else {
                Vec::new()
            };
            next_alive.push(Beam { hyp, cache, next });
        }
        alive = next_alive;
    }
    done.extend(alive.into_iter().map(|b| b.hyp));
    done.sort_by(|a, b| b.score(length_penalty).total_cmp(&a.score(length_penalty)));
    Ok(done)
}
