//! Block architectures assembled from the SSM kernels.

mod block;
pub mod conv;
pub mod norm;
pub mod reversal;

pub use block::{BlockCache, BlockConfig, BlockTrace, MambaBlock};
pub use conv::causal_conv1d;
pub use norm::{layer_norm, silu};
pub use reversal::{reverse_speech_rows, speech_token_reversal, PrefixLayout};

use crate::scalar::Scalar;
use crate::ssm::ScanMode;

/// Evaluate a (possibly parallel speech-prefix) block over a full sequence,
/// optionally continuing from a cache.
pub fn mamba_block_forward<T: Scalar>(
    x: &[T],
    params: &MambaBlock<T>,
    layout: &PrefixLayout,
    cache: Option<&BlockCache<T>>,
) -> crate::Result<(Vec<T>, BlockCache<T>)> {
    params.forward(x, layout, cache, ScanMode::Sequential)
}

/// Evaluate a block that carries a backward branch over the speech span.
pub fn parallel_sp_block_forward<T: Scalar>(
    x: &[T],
    params: &MambaBlock<T>,
    layout: &PrefixLayout,
    cache: Option<&BlockCache<T>>,
) -> crate::Result<(Vec<T>, BlockCache<T>)> {
    if !params.is_parallel_sp() {
        return Err(crate::Error::Config("block has no backward branch".into()));
    }
    params.forward(x, layout, cache, ScanMode::Sequential)
}

#[cfg(test)]
mod tests;
