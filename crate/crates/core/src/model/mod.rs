//! The decoder-only recognizer: configuration, composed sequences, the
//! network with its training and incremental inference paths, loss,
//! decoding and checkpoints.

pub mod checkpoint;
mod config;
mod decode;
mod loss;
mod network;
mod sequence;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{ModelConfig, PrefixMode};
pub use decode::{beam_search, greedy_decode, Hypothesis};
pub use loss::{argmax, log_softmax, masked_cross_entropy, masked_cross_entropy_grad, LossStats};
pub use network::{embedding_mask_augment, Model, ModelTrace, StateCache};
pub use sequence::{prefix_layout, speech_prefix, ComposedSequence};
