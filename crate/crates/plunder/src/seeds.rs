//! Stable seed derivation. Every random decision in the pipeline draws from
//! a stream seeded by mixing the master seed with fixed stream tags, so runs
//! reproduce exactly and parallel workers stay decoupled.

/// Pseudo-random number generator used throughout the crate. ChaCha has a
/// portable, documented stream, so seeds mean the same thing everywhere.
pub type Prng = rand_chacha::ChaCha8Rng;

pub const STREAM_LIKELIHOOD: u64 = 1;
pub const STREAM_E_STEP: u64 = 2;
pub const STREAM_M_STEP: u64 = 3;
pub const STREAM_DEMO: u64 = 4;
pub const STREAM_EVAL: u64 = 5;
pub const STREAM_ROLLOUT: u64 = 6;
pub const STREAM_FIT: u64 = 7;
pub const STREAM_SUBSAMPLE: u64 = 8;
pub const STREAM_ENUMERATE: u64 = 9;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a stream path (tags, iteration numbers, worker
/// indices). Fixed function, independent of std hashing internals.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(master ^ 0x517c_c1b7_2722_0a95);
    for &part in path {
        s = splitmix64(s ^ part.wrapping_mul(0x2545_f491_4f6c_dd1d));
    }
    s
}

pub fn rng_for(master: u64, path: &[u64]) -> Prng {
    use rand::SeedableRng;
    Prng::seed_from_u64(derive_seed(master, path))
}
