//! Deterministic random-number streams.
//!
//! All randomness in this crate comes from ChaCha8, a counter-based stream
//! cipher generator. A 64-bit seed keys the generator (expanded via
//! `SeedableRng::seed_from_u64`) and a 64-bit stream id selects an
//! independent stream, so parallel work can draw from disjoint streams
//! without coordination and results never depend on scheduling.
//!
//! Stream layout:
//! - Simulation cells use `stream = rep * 8 + role` under the experiment
//!   seed, with the roles below.
//! - The pipeline's data split uses stream 0 under its own `split_seed`.
//! - Benchmark estimators use streams 0.. under their `seed` argument for
//!   their internal splits (documented per function).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a per-replication stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Source = 0,
    Target = 1,
    Eval = 2,
    Split = 3,
}

/// Generator for an explicit (seed, stream) pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for one role of one simulation replication.
pub fn cell_rng(seed: u64, rep: u64, role: Role) -> ChaCha8Rng {
    stream_rng(seed, rep * 8 + role as u64)
}

/// Fisher-Yates shuffled indices `0..n`.
pub fn shuffled_indices<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Random half split of `0..n` with the first part of size `⌈n/2⌉`.
pub fn half_split<R: Rng>(n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let idx = shuffled_indices(n, rng);
    let n1 = n.div_ceil(2);
    (idx[..n1].to_vec(), idx[n1..].to_vec())
}
