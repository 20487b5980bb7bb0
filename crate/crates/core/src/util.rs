//! Seed derivation and content hashing shared across the crate.
//!
//! All randomness flows through [`rng_for`]: a stream is fully determined by
//! a base seed plus a list of integer tags (site index, epoch, purpose, ...),
//! so any stage of a run can be reproduced in isolation.

use rand_pcg::Pcg64Mcg;

/// splitmix64 finalizer; good avalanche for seed mixing.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of tags into a single 64-bit seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut acc = splitmix64(base ^ 0x6a09_e667_f3bc_c908);
    for &t in tags {
        acc = splitmix64(acc ^ splitmix64(t));
    }
    acc
}

/// Deterministic RNG for a (seed, tags) coordinate.
pub fn rng_for(base: u64, tags: &[u64]) -> Pcg64Mcg {
    use rand::SeedableRng;
    Pcg64Mcg::seed_from_u64(derive_seed(base, tags))
}

/// FNV-1a 64-bit over raw bytes; used for corpus checksums and round logs.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// FNV-1a 64-bit of a string tag, for folding names into seeds.
pub fn tag(s: &str) -> u64 {
    fnv1a64(s.as_bytes())
}
