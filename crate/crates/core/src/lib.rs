//! Decoder-only speech recognition with selective state-space models.
//!
//! A single recurrent decoder reads a prefix of discrete speech tokens and
//! autoregressively emits the transcription. The crate covers the SSM
//! kernels, the block architectures (including bidirectional processing of
//! the speech prefix), the discrete-token pipeline, training, decoding and
//! evaluation.

pub mod blocks;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod selftest;
pub mod ssm;
pub mod tensor;
pub mod tokenizer;
pub mod tokens;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Parameters, Tensor};
