//! Seed derivation.
//!
//! Every random quantity is drawn from its own ChaCha20 stream. The stream
//! seed is a SplitMix64 fold of the master seed with a purpose tag and any
//! number of integer coordinates (sample size, trial index, ...), so results
//! never depend on the order in which trials are scheduled.
//!
//! Gaussian variates come from `rand_distr::StandardNormal` (ziggurat).

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Purpose tags for derived streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Matrix = 0x6d61_7472_6978,
    SignalSupport = 0x7375_7070_6f72,
    SignalValues = 0x7661_6c75_6573,
    Noise = 0x006e_6f69_7365,
    Trial = 0x0074_7269_616c,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `seed`; order-sensitive.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(seed.wrapping_add(GOLDEN)), |acc, &p| {
        mix64(acc ^ mix64(p.wrapping_add(GOLDEN)))
    })
}

/// RNG for one purpose stream of a seed.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(seed, &[stream as u64]))
}

/// Seed for trial `trial` of the experiment cell indexed by `n`.
pub fn trial_seed(master: u64, n: usize, trial: usize) -> u64 {
    derive_seed(master, &[Stream::Trial as u64, n as u64, trial as u64])
}
