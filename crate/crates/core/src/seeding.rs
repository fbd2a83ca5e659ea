//! Deterministic seed derivation. Sub-streams (per method, per image, per
//! baseline) are derived from the global seed with splitmix64 steps so that
//! execution order and parallelism cannot change sampled values.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of salts.
pub fn derive_seed(base: u64, salts: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &salt in salts {
        state = splitmix64(state ^ splitmix64(salt));
    }
    state
}
