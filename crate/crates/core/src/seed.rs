//! Counter-based seed derivation.
//!
//! Every random stream in the pipeline is keyed by the master seed plus a
//! path of integers (stage tag, user id, fold, tree index, ...), so results
//! never depend on the order in which parallel work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_DATASET: u64 = 0x6461_7461;
pub const TAG_FOLDS: u64 = 0x666f_6c64;
pub const TAG_TRAIN: u64 = 0x7472_6e21;
pub const TAG_TREE: u64 = 0x7472_6565;
pub const TAG_MODEL: u64 = 0x6d6f_646c;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
