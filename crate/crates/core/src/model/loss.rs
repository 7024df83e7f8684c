use super::sequence::ComposedSequence;
use crate::error::{check_len, Error, Result};
use crate::scalar::Scalar;

/// Summed statistics over the scored positions of one or more sequences.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub loss_sum: f64,
    pub count: usize,
    pub correct: usize,
}

impl LossStats {
    pub fn merge(&mut self, other: &LossStats) {
        self.loss_sum += other.loss_sum;
        self.count += other.count;
        self.correct += other.correct;
    }

    pub fn mean_loss(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.loss_sum / self.count as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.correct as f64 / self.count as f64
        }
    }
}

/// `log softmax` of one row.
pub fn log_softmax<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
    row.iter().map(|&v| v - lse).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Mean negative log-likelihood of the scored next tokens.
pub fn masked_cross_entropy<T: Scalar>(
    logits: &[T],
    vocab: usize,
    seq: &ComposedSequence,
) -> Result<T> {
    let stats = scored_positions(logits, vocab, seq, None)?;
    if stats.count == 0 {
        return Err(Error::Domain("loss mask selects no positions".into()));
    }
    Ok(T::lit(stats.mean_loss()))
}

/// Loss statistics plus `scale · ∂(summed loss)/∂logits`.
///
/// Rows outside the mask receive an exactly zero gradient.
pub fn masked_cross_entropy_grad<T: Scalar>(
    logits: &[T],
    vocab: usize,
    seq: &ComposedSequence,
    scale: T,
) -> Result<(LossStats, Vec<T>)> {
    let mut grad = vec![T::zero(); logits.len()];
    let stats = scored_positions(logits, vocab, seq, Some((&mut grad, scale)))?;
    Ok((stats, grad))
}

fn scored_positions<T: Scalar>(
    logits: &[T],
    vocab: usize,
    seq: &ComposedSequence,
    mut grad: Option<(&mut [T], T)>,
) -> Result<LossStats> {
    check_len("logits", seq.len() * vocab, logits.len())?;
    let mut stats = LossStats::default();
    for (l, &scored) in seq.loss_mask.iter().enumerate() {
        if !scored {
            continue;
        }
        let target = seq.ids[l + 1] as usize;
        if target >= vocab {
            return Err(Error::InvalidToken {
                id: target as u32,
                vocab,
            });
        }
        let row = &logits[l * vocab..(l + 1) * vocab];
        let lp = log_softmax(row);
        stats.loss_sum -= lp[target].as_f64();
        stats.count += 1;
        if argmax(row) == target {
            stats.correct += 1;
        }
        if let Some((g, scale)) = grad.as_mut() {
            let g_row = &mut g[l * vocab..(l + 1) * vocab];
            for (gv, &v) in g_row.iter_mut().zip(&lp) {
                *gv = *scale * v.exp();
            }
            g_row[target] -= *scale;
        }
    }
    Ok(stats)
}
