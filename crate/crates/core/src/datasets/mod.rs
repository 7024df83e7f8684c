//! Desk-scale task generators, corpus I/O and batching.

mod asr;
mod batch;
mod copy;
mod corpus;

pub use asr::{
    build_vocabulary, emit_frames, encode_record, gen_synthetic_asr, SyntheticAsrConfig,
    SyntheticAsrInstance,
};
pub use batch::{make_batches, TrainBatch};
pub use copy::{gen_selective_copy, SelectiveCopyInstance, COPY_DATA_START, COPY_MARKER, COPY_NOISE};
pub use corpus::{load_corpus, save_corpus, CorpusRecord};
