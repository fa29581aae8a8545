//! Stable sub-seed derivation.
//!
//! A global seed is split into per-component seeds by hashing the pair
//! `(seed, component name)`, so adding a component never shifts the random
//! stream of another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over a byte string.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_extend(FNV_OFFSET, bytes)
}

pub(crate) fn fnv1a_extend(mut hash: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

// splitmix64 finalizer; spreads FNV output over all bits.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for `component` under the global `seed`.
pub fn derive_seed(seed: u64, component: &str) -> u64 {
    let h = fnv1a_extend(fnv1a(&seed.to_le_bytes()), component.as_bytes());
    mix(h)
}

/// Deterministic generator for `component` under `seed`.
pub fn rng_for(seed: u64, component: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, component))
}
