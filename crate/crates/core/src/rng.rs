//! Named random sub-streams derived from a single root seed.
//!
//! Every consumer of randomness (generator, split, init, shuffle, dropout)
//! draws from its own stream, so changing how much randomness one consumer
//! uses never shifts the numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const GENERATOR: &str = "generator";
pub const SPLIT: &str = "split";
pub const INIT: &str = "init";
pub const SHUFFLE: &str = "shuffle";
pub const DROPOUT: &str = "dropout";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed for sub-stream `(name, index)` of `root`.
pub fn derive_seed(root: u64, name: &str, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ fnv1a(name)) ^ splitmix64(index.wrapping_add(1)))
}

pub fn stream(root: u64, name: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(root, name, index))
}
