//! Stable 64-bit hashing and mixing for deriving reproducible rng streams.
//!
//! Cell seeds are `splitmix64(master_seed ^ fnv1a64(cell_key))`, where the
//! key is a canonical text rendering of the cell coordinates. Neither function
//! depends on the platform or on the standard library's randomized hashers.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// The splitmix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines two 64-bit values into one well-mixed value.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

/// Seed for a named key under a master seed.
pub fn keyed_seed(master: u64, key: &str) -> u64 {
    splitmix64(master ^ fnv1a64(key.as_bytes()))
}
