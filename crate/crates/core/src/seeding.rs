//! Counter-based seed derivation.
//!
//! All randomness in the pipeline flows from a single root seed. Work items
//! (frames, cameras, primitives) derive their own stream seed from the root
//! and their indices, so per-item parallelism cannot change results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; good avalanche, stable across platforms.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Derive a child seed from a root seed and a path of stream indices.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(root ^ 0x6a09e667f3bcc908);
    for &tag in path {
        s = splitmix64(s ^ splitmix64(tag));
    }
    s
}

/// Deterministic RNG for a derived stream.
pub fn stream_rng(root: u64, path: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(root, path))
}

/// Stream tags for the pipeline stages that consume randomness.
pub mod streams {
    pub const TRAJECTORY: u64 = 1;
    pub const SCENE_SAMPLING: u64 = 2;
}
