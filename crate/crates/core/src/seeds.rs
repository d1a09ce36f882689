//! Seed derivation shared by every seeded component.
//!
//! `derive(seed, k)` is one SplitMix64 finalization of `seed` combined with
//! `k`; chains such as `derive(derive(global, point), instance)` name a
//! single random stream reproducibly on any platform.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, k: u64) -> u64 {
    splitmix(seed.wrapping_add(GOLDEN).wrapping_add(splitmix(k.wrapping_add(GOLDEN))))
}
