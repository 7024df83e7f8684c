//! Reserved token ids shared by every vocabulary.

/// Padding; never a prediction target.
pub const PAD: u32 = 0;
/// Marks the start of the speech prefix.
pub const SPEECH: u32 = 1;
/// Separates the speech prefix from the transcription.
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
/// Number of reserved ids; speech subwords start here.
pub const NUM_SPECIAL: u32 = 4;
