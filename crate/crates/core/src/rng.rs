//! Seeded generator plumbing. Every random draw in a run descends from one
//! `u64` seed; per-image streams are derived by hashing `(seed, domain, index)`
//! so that results do not depend on batch composition or evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

/// Stream domains, so that training, evaluation and initialisation never
/// share generator state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Init = 1,
    Shuffle = 2,
    Train = 3,
    Eval = 4,
    Split = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic 64-bit key for `(seed, domain, a, b)`.
pub fn derive_key(seed: u64, domain: Domain, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ domain as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Independent generator for `(seed, domain, a, b)`.
pub fn stream(seed: u64, domain: Domain, a: u64, b: u64) -> RunRng {
    RunRng::seed_from_u64(derive_key(seed, domain, a, b))
}
