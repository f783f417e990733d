//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose 256-bit
//! key is derived from a master seed and a path of stream indices, e.g.
//! `(master, [cell, query])`. Streams with distinct paths are independent, so
//! results do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags used to keep unrelated consumers of one master seed apart.
pub mod tags {
    pub const DATASET: u64 = 1;
    pub const PIVOTS: u64 = 2;
    pub const QUERIES: u64 = 3;
    pub const PAIRS: u64 = 4;
    pub const TEST_FUNCTIONS: u64 = 5;
    pub const SAMPLES: u64 = 6;
    pub const CONCENTRATION: u64 = 7;
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a path of stream indices into a single 64-bit seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = master;
    let mut acc = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(GOLDEN).rotate_left(17);
        acc = acc.rotate_left(23) ^ splitmix64(&mut state);
    }
    acc
}

/// Generator for the stream identified by `(master, path)`.
pub fn stream_rng(master: u64, path: &[u64]) -> StreamRng {
    let mut state = derive_seed(master, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
