//! Seeded, counter-based random streams.
//!
//! Every stochastic routine takes its generator explicitly. Parallel loops
//! derive one stream per replicate from a base seed so results do not depend
//! on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type GwRng = ChaCha8Rng;

/// Generator for `seed`, positioned on stream 0.
pub fn seeded(seed: u64) -> GwRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> GwRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw a fresh base seed from `rng` for a batch of per-replicate streams.
pub fn fork_seed<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.random()
}
