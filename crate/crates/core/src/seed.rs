//! Stateless seed derivation for replica streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every replica stream.
pub type Stream = ChaCha8Rng;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes `(master, index, tag)` into a 64-bit seed. Each input passes through a
/// full splitmix64 finalizer before being folded in, so every bit of every
/// input avalanches.
#[inline]
pub fn derive_seed(master: u64, index: u64, tag: u64) -> u64 {
    let mut h = mix64(master ^ 0x9e37_79b9_7f4a_7c15);
    h = mix64(h ^ mix64(index.wrapping_add(0x6a09_e667_f3bc_c909)));
    mix64(h ^ mix64(tag.wrapping_add(0xbb67_ae85_84ca_a73b)))
}

/// Tags for the independent streams of one replica.
pub mod tag {
    pub const ENVIRONMENT: u64 = 1;
    pub const WALK: u64 = 2;
    pub const SPINE: u64 = 3;
    pub const LEAVES: u64 = 4;
    pub const EXTREMAL: u64 = 5;
    pub const ARRAY: u64 = 6;
    pub const ORACLE: u64 = 7;
}

pub fn stream(master: u64, index: u64, tag: u64) -> Stream {
    Stream::seed_from_u64(derive_seed(master, index, tag))
}

/// A uniform on `(0, 1]` from a 64-bit hash, using the top 53 bits.
#[inline]
pub fn unit_from_bits(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}
