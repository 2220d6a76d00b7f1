//! Seeded, splittable randomness. Every random choice in the crate draws from
//! a ChaCha8 stream whose seed is derived from a base seed and a label.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rational::Q;

pub type SimRng = ChaCha8Rng;

/// Purpose labels for seed derivation.
pub mod label {
    pub const DELTAS: u64 = 1;
    pub const SITES: u64 = 2;
    pub const SITE_COINS: u64 = 3;
    pub const FAMILY: u64 = 4;
    pub const HASH: u64 = 5;
    pub const TRIAL: u64 = 6;
    pub const WORKLOAD: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(base, label, index)`; distinct triples give unrelated streams.
pub fn derive_seed(base: u64, label: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ label.wrapping_mul(0xA24B_AED4_963E_E407)) ^ index)
}

pub fn rng_for(base: u64, label: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, label, index))
}

/// One Bernoulli draw with an exact rational success probability in [0, 1].
pub fn bernoulli_exact<R: Rng + ?Sized>(rng: &mut R, p: &Q) -> bool {
    let numer = *p.numer();
    let denom = *p.denom();
    if numer <= 0 {
        return false;
    }
    if numer >= denom {
        return true;
    }
    (rng.gen_range(0..denom as u128) as i128) < numer
}
