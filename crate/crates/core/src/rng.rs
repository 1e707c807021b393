//! Counter-based seeding: every (purpose, agent, iteration) triple gets its
//! own ChaCha stream derived from one master seed, so draws do not depend on
//! the order in which agents are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep unrelated consumers of the same master seed apart.
pub mod tag {
    pub const NOISE: u64 = 0x6e6f697365;
    pub const INIT: u64 = 0x696e6974;
    pub const ORACLE: u64 = 0x6f7261636c65;
    pub const PROBE: u64 = 0x70726f6265;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a sequence of counters into a 64-bit stream seed.
pub fn derive_seed(master: u64, counters: &[u64]) -> u64 {
    counters
        .iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn stream(master: u64, counters: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, counters))
}
