//! Deterministic seed streams.
//!
//! A master seed is expanded into independent stream seeds by hashing
//! `(master, label, index)` with SplitMix64. Streams are addressed by a stable
//! label rather than by creation order, so adding a new consumer never shifts
//! the seeds handed to existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used throughout the simulator.
pub type SimRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives the seed of stream `(label, index)` from `master`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let a = splitmix64(master ^ splitmix64(label_hash(label)));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(master: u64, label: &str, index: u64) -> SimRng {
    rng_from_seed(derive_seed(master, label, index))
}
