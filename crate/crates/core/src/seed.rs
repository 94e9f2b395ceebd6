//! Deterministic derivation of independent random streams from a master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a master seed with a stream tag and index (splitmix64 finalizer).
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, tag: u64, index: u64) -> ChaCha8Rng {
    rng(derive_seed(master, tag, index))
}

// Stream tags. Distinct constants keep unrelated consumers decorrelated.
pub(crate) const TAG_KMEANS: u64 = 1;
pub(crate) const TAG_OUTER_FOLDS: u64 = 2;
pub(crate) const TAG_INNER_FOLDS: u64 = 3;
pub(crate) const TAG_SYNTH: u64 = 4;
pub(crate) const TAG_JITTER: u64 = 5;
pub(crate) const TAG_PHENOTYPE: u64 = 6;
pub(crate) const TAG_BLUEPRINT: u64 = 7;
