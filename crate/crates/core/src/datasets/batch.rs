use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::PrefixLayout;
use crate::error::{Error, Result};
use crate::model::ComposedSequence;

/// Right-padded batch of composed sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainBatch {
    /// `batch × width`, row-major.
    pub ids: Vec<u32>,
    pub width: usize,
    pub lengths: Vec<usize>,
    pub layouts: Vec<PrefixLayout>,
    /// `batch × width`; always false on padding.
    pub loss_mask: Vec<bool>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// The sequences with padding stripped.
    pub fn sequences(&self) -> Vec<ComposedSequence> {
        (0..self.len())
            .map(|b| {
                let row = b * self.width;
                let n = self.lengths[b];
                ComposedSequence {
                    ids: self.ids[row..row + n].to_vec(),
                    layout: self.layouts[b],
                    loss_mask: self.loss_mask[row..row + n].to_vec(),
                }
            })
            .collect()
    }
}

/// Length-bucketed, seeded batching: a shuffled order is stably sorted by
/// length, cut into batches, and the batch order shuffled again.
pub fn make_batches(
    seqs: &[ComposedSequence],
    batch_size: usize,
    pad_id: u32,
    seed: u64,
) -> Result<Vec<TrainBatch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| seqs[i].len());
    let mut batches: Vec<TrainBatch> = order
        .chunks(batch_size)
        .map(|chunk| {
            let width = chunk.iter().map(|&i| seqs[i].len()).max().unwrap_or(0);
            let mut ids = vec![pad_id; chunk.len() * width];
            let mut loss_mask = vec![false; chunk.len() * width];
            for (b, &i) in chunk.iter().enumerate() {
                let s = &seqs[i];
                ids[b * width..b * width + s.len()].copy_from_slice(&s.ids);
                loss_mask[b * width..b * width + s.len()].copy_from_slice(&s.loss_mask);
            }
            TrainBatch {
                ids,
                width,
                lengths: chunk.iter().map(|&i| seqs[i].len()).collect(),
                layouts: chunk.iter().map(|&i| seqs[i].layout).collect(),
                loss_mask,
            }
        })
        .collect();
    batches.shuffle(&mut rng);
    Ok(batches)
}
