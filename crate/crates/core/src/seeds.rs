//! Seed derivation. Every random stream in a run is derived from one run seed
//! through fixed, named offsets so that each can be varied in isolation.

/// Offset for stream construction (class means, subsampling, shuffling).
pub const STREAM_OFFSET: u64 = 0;
/// Offset for network initialization.
pub const MODEL_INIT_OFFSET: u64 = 1;
/// Offset for training-time randomness (buffer, augmentation).
pub const TRAINING_OFFSET: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub stream: u64,
    pub model_init: u64,
    pub training: u64,
}

impl RunSeeds {
    pub fn from_run_seed(seed: u64) -> Self {
        Self {
            stream: seed.wrapping_add(STREAM_OFFSET),
            model_init: seed.wrapping_add(MODEL_INIT_OFFSET),
            training: seed.wrapping_add(TRAINING_OFFSET),
        }
    }
}

/// Mixes a base seed with a tag into an independent-looking 64-bit seed (splitmix64 finalizer).
pub fn mix(base: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
