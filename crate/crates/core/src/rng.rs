//! Seeded random streams.
//!
//! All randomness flows from one root seed. Independent consumers (env
//! resets, weight init, action sampling, teammate draws) get their own
//! ChaCha stream selected by a stable hash of a name plus indices, so adding
//! draws in one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8], mut h: u64) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed, a stream name and indices.
pub fn derive_seed(seed: u64, name: &str, indices: &[u64]) -> u64 {
    let mut h = fnv1a(name.as_bytes(), FNV_OFFSET);
    for i in indices {
        h = fnv1a(&i.to_le_bytes(), h);
    }
    splitmix64(seed ^ splitmix64(h))
}

/// Named substream of `seed`.
pub fn substream(seed: u64, name: &str, indices: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, name, indices))
}
