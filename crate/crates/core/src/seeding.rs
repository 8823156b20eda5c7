//! Deterministic derivation of sub-seeds so that per-class, per-subject, and
//! per-round work can run independently (or in parallel) without sharing RNG
//! state.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with a stream index into an independent sub-seed.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(root) ^ splitmix64(stream.wrapping_add(0x9E37)))
}

/// Two-level variant for (round, subject)-style derivations.
pub fn derive_seed2(root: u64, a: u64, b: u64) -> u64 {
    derive_seed(derive_seed(root, a), b)
}

/// Seeded Fisher-Yates permutation of `0..n`, used for fold assignment.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}
