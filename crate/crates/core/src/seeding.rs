use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; used to derive independent stream seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic RNG for a named sub-stream of a base seed.
pub fn stream_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut s = mix64(seed);
    for &p in parts {
        s = mix64(s ^ p);
    }
    ChaCha8Rng::seed_from_u64(s)
}

/// Stable 64-bit FNV-1a hash, for turning names into stream ids.
pub fn name_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
