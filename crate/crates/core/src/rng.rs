//! Deterministic RNG stream derivation.
//!
//! Every stochastic step draws from a ChaCha stream whose seed is a hash of a
//! base seed and a path of integers (sample index, epoch, replicate, ...), so
//! results do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mix a base seed with a path of stream coordinates.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn stream(base: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(base, path))
}

/// Stable numeric tags for named streams.
pub mod tags {
    pub const SHUFFLE: u64 = 0x5348_5546;
    pub const DROPOUT: u64 = 0x4452_4f50;
    pub const INIT_QUANTUM: u64 = 0x5149_4e49;
    pub const INIT_CLASSICAL: u64 = 0x4349_4e49;
    pub const SHOTS: u64 = 0x5348_4f54;
    pub const BOOTSTRAP: u64 = 0x424f_4f54;
    pub const FOLDS: u64 = 0x464f_4c44;
    pub const DATASET: u64 = 0x4441_5441;
    pub const SPLIT: u64 = 0x5350_4c54;
}
