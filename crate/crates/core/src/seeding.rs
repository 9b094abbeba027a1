//! Deterministic seed derivation and the project-wide random generator.
//!
//! Every stochastic component in this crate draws from [`ProjectRng`]
//! (ChaCha12), seeded through [`derive_seed`]. Sub-streams (replicates,
//! model draws, test draws) are split by hashing `(master seed, tags...)`
//! with SplitMix64, so adding replicates or reordering work never
//! perturbs existing streams.

use rand::SeedableRng;

/// The single generator algorithm used project-wide. ChaCha12 is seedable,
/// portable across platforms, and fast enough for desk-scale Monte Carlo.
pub type ProjectRng = rand_chacha::ChaCha12Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output scramble of a single state word.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a master seed and a path of tags.
///
/// Each tag folds into the state via SplitMix64, so distinct tag paths
/// yield statistically independent seeds and the derivation is stable
/// across releases.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &tag in tags {
        state = splitmix64(state ^ tag.wrapping_mul(GOLDEN_GAMMA).wrapping_add(1));
    }
    state
}

/// Seed for replicate `index` of a run with the given master seed.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    derive_seed(master, &[index])
}

/// Fresh generator for `(master, tags...)`.
pub fn rng(master: u64, tags: &[u64]) -> ProjectRng {
    ProjectRng::seed_from_u64(derive_seed(master, tags))
}

/// 64-bit content hash used for config provenance headers.
///
/// FNV-1a over the bytes, finished with a SplitMix64 scramble. Not
/// cryptographic; collisions only matter for telling configs apart in
/// report headers.
pub fn content_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_stable_and_tag_sensitive() {
        let a = derive_seed(42, &[0]);
        let b = derive_seed(42, &[0]);
        let c = derive_seed(42, &[1]);
        let d = derive_seed(43, &[0]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn replicate_seeds_do_not_depend_on_count() {
        let first_of_ten: Vec<u64> = (0..10).map(|i| replicate_seed(7, i)).collect();
        let first_of_three: Vec<u64> = (0..3).map(|i| replicate_seed(7, i)).collect();
        assert_eq!(&first_of_ten[..3], &first_of_three[..]);
    }

    #[test]
    fn rng_reproduces_the_same_stream() {
        use rand::Rng;
        let mut r1 = rng(11, &[3, 5]);
        let mut r2 = rng(11, &[3, 5]);
        let a: Vec<f64> = (0..8).map(|_| r1.random()).collect();
        let b: Vec<f64> = (0..8).map(|_| r2.random()).collect();
        assert_eq!(a, b);
    }
}
