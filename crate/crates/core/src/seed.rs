//! Seed derivation for independent random streams.
//!
//! Every stochastic stage draws from a `ChaCha8Rng` whose seed is derived
//! from a user seed and a stream tag, so that e.g. the fitness start states
//! and the evaluation start states never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_FITNESS_STARTS: u64 = 0x5354_4152_5453_0001;
pub const STREAM_EVAL_STARTS: u64 = 0x5354_4152_5453_0002;
pub const STREAM_PSO: u64 = 0x5053_4f00_0000_0001;
pub const STREAM_PARAM_INIT: u64 = 0x494e_4954_0000_0001;
pub const STREAM_SHUFFLE: u64 = 0x5348_5546_0000_0001;
pub const STREAM_SUBSET: u64 = 0x5355_4253_0000_0001;
pub const STREAM_RUN: u64 = 0x5255_4e00_0000_0001;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` for the given stream tag.
pub fn derive(base: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(base) ^ stream)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(base: u64, stream: u64) -> ChaCha8Rng {
    rng(derive(base, stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ() {
        assert_ne!(derive(7, STREAM_FITNESS_STARTS), derive(7, STREAM_EVAL_STARTS));
        assert_ne!(derive(7, STREAM_PSO), derive(8, STREAM_PSO));
        assert_eq!(derive(7, STREAM_PSO), derive(7, STREAM_PSO));
    }
}
