//! Reproducible random streams.
//!
//! Every consumer of randomness (splitting, initialization, shuffling,
//! augmentation, dropout) draws from its own ChaCha8 stream. A stream is keyed
//! by the run seed plus a short list of tags, mixed with SplitMix64, so adding
//! draws in one place never perturbs another. ChaCha8 output is specified
//! bit-for-bit and does not depend on the platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract.
pub mod tag {
    pub const SPLIT: u64 = 0x5350_4c49;
    pub const INIT: u64 = 0x494e_4954;
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const AUGMENT: u64 = 0x4155_474d;
    pub const DROPOUT: u64 = 0x4452_4f50;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the stream for `seed` and `tags`.
pub fn stream(seed: u64, tags: &[u64]) -> SeededRng {
    let mut key = [0u8; 32];
    let mut state = splitmix64(seed);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T, R: Rng + ?Sized>(items: &mut [T], rng: &mut R) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}
