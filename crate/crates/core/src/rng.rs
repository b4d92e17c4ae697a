//! Deterministic seed derivation.
//!
//! Every randomized job (dataset generation, weight init, each probe fit)
//! gets its seed by mixing the master seed with structured tag words. Results
//! therefore do not depend on scheduling order or parallelism degree.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags; keep values stable, they are part of the reproducibility
/// contract for saved runs.
pub mod tag {
    pub const DATASET: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const PROBE_DATA: u64 = 4;
    pub const PROBE_JOB: u64 = 5;
    pub const ORACLE_DATA: u64 = 6;
    pub const ORACLE_TRIAL: u64 = 7;
    pub const GRADCHECK_DATA: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a master seed with a sequence of tag words into a derived stream seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ 0x6a09_e667_f3bc_c908);
    for &t in tags {
        h = splitmix64(h ^ t);
    }
    h
}
