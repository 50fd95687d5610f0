//! Seed derivation. Every random quantity is drawn from its own ChaCha
//! stream, addressed by a master seed, a purpose tag and an index path, so
//! results never depend on scheduling or on the order other streams are
//! consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// What a stream is used for. Distinct tags give disjoint streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u64)]
pub enum Stream {
    KeySeeds = 1,
    Channel = 2,
    Eavesdrop = 3,
    Messages = 4,
    Masks = 5,
    ChannelNoise = 6,
    EffectiveNoise = 7,
    Round = 8,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a tag and an index path into a 64-bit value.
pub fn derive_seed(seed: u64, tag: Stream, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(tag as u64));
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

/// A fresh generator for `(seed, tag, path)`.
pub fn stream(seed: u64, tag: Stream, path: &[u64]) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(derive_seed(seed, tag, path));
    rng
}

/// Like [`stream`], positioned at the `index`-th 64-bit output so a single
/// value can be read without generating its predecessors.
pub fn stream_at(seed: u64, tag: Stream, path: &[u64], index: u64) -> ChaCha12Rng {
    let mut rng = stream(seed, tag, path);
    rng.set_word_pos(u128::from(index) * 2);
    rng
}
