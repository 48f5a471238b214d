//! Seed derivation.
//!
//! Every stage draws from its own ChaCha stream keyed by the run seed, so a
//! stage can be re-run in isolation and still see the same numbers it saw
//! inside a full pipeline run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers for the stages that consume randomness.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const DECODER_INIT: u64 = 0x100;
    pub const DECODER_TRAIN: u64 = 0x200;
}

/// Generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
