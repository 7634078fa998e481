//! Seeded random streams.
//!
//! Every run has one root seed. Worker `p` draws from the stream seeded with
//! `seed + p`, so changing the worker count never reshuffles the streams of
//! the workers that remain.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, worker: usize) -> Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(worker as u64))
}

/// Stream reserved for coordinators (scheduler, data generators).
pub fn coordinator(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15)
}
