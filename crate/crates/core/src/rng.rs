//! Seeded random streams.
//!
//! Every task (truth simulation, filter repeat `m`, ...) gets its own
//! ChaCha stream derived from a `(seed, stream)` pair, so repeats can run in
//! any order or concurrently and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream id reserved for the synthetic truth and observation generation.
pub const TRUTH_STREAM: u64 = 0;
/// Stream id used by filter repeats (combined with a per-repeat seed).
pub const FILTER_STREAM: u64 = 1;
/// Stream id used for ensemble baselines.
pub const ENSEMBLE_STREAM: u64 = 2;
/// Stream id used for proposal tuning pilot runs.
pub const PILOT_STREAM: u64 = 3;
/// Stream id used for the noise-driven free runs behind the prior reference.
pub const REFERENCE_STREAM: u64 = 4;

pub fn seeded(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for repeat `m` of an experiment seeded with `seed_base`.
pub fn repeat_rng(seed_base: u64, m: usize) -> SimRng {
    seeded(seed_base.wrapping_add(m as u64), FILTER_STREAM)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = seeded(7, 0).random();
        let b: u64 = seeded(7, 1).random();
        let c: u64 = seeded(7, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
        let r0: u64 = repeat_rng(10, 2).random();
        let r1: u64 = repeat_rng(11, 1).random();
        assert_eq!(r0, r1);
    }
}
