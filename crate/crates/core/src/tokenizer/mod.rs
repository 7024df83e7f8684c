//! Discrete speech-token pipeline: k-means quantization, de-duplication,
//! subword modeling and the joint vocabulary, plus their file formats.

mod bpe;
pub mod features;
mod files;
mod kmeans;
mod vocab;

pub use bpe::{bpe_train, SubwordModel};
pub use features::{read_features, write_features, FeatureRecord};
pub use files::{load_codebook, load_subword, load_vocabulary, save_codebook, save_subword, save_vocabulary};
pub use kmeans::{deduplicate, kmeans_fit, vq_assign, vq_assign_all, Codebook, KmeansFit};
pub use vocab::{compose_sequence, text_symbols, Vocabulary};
