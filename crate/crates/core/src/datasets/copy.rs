//! Selective copying: remember the data tokens scattered among noise and
//! reproduce them in order after a marker.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocks::PrefixLayout;
use crate::error::{Error, Result};
use crate::model::ComposedSequence;

pub const COPY_NOISE: u32 = 0;
pub const COPY_MARKER: u32 = 1;
/// First data token id; data tokens are `COPY_DATA_START..vocab`.
pub const COPY_DATA_START: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectiveCopyInstance {
    /// `seq_len` ids ending with the marker.
    pub input: Vec<u32>,
    /// The data tokens in input order.
    pub target: Vec<u32>,
    /// Where the data tokens sit in `input`, ascending.
    pub data_positions: Vec<usize>,
}

impl SelectiveCopyInstance {
    /// Teacher-forced sequence `input ++ target`; the rows from the marker
    /// onwards are scored.
    pub fn to_sequence(&self) -> ComposedSequence {
        let mut ids = self.input.clone();
        ids.extend_from_slice(&self.target);
        let len = ids.len();
        let first = self.input.len() - 1;
        let loss_mask = (0..len).map(|l| l >= first && l + 1 < len).collect();
        ComposedSequence {
            ids,
            layout: PrefixLayout::causal(len),
            loss_mask,
        }
    }
}

/// `n` instances whose `n_data` data positions are drawn uniformly without
/// replacement from the first `seq_len - 1` slots.
pub fn gen_selective_copy(
    n: usize,
    seq_len: usize,
    n_data: usize,
    vocab: usize,
    seed: u64,
) -> Result<Vec<SelectiveCopyInstance>> {
    if vocab <= COPY_DATA_START as usize {
        return Err(Error::Config(format!("selective copy needs vocab > 2, got {vocab}")));
    }
    if seq_len == 0 || n_data >= seq_len {
        return Err(Error::Config(format!(
            "cannot place {n_data} data tokens before the marker in a length-{seq_len} input"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = seq_len - 1;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut positions = sample(&mut rng, slots, n_data).into_vec();
        positions.sort_unstable();
        let mut input = vec![COPY_NOISE; seq_len];
        input[slots] = COPY_MARKER;
        let mut target = Vec::with_capacity(n_data);
        for &p in &positions {
            let t = rng.gen_range(COPY_DATA_START..vocab as u32);
            input[p] = t;
            target.push(t);
        }
        out.push(SelectiveCopyInstance {
            input,
            target,
            data_positions: positions,
        });
    }
    Ok(out)
}
