//! Seed-derived random streams.
//!
//! Every trial owns two independent ChaCha20 streams: one for the
//! parameter draws `θ_j` and one for the objective's noise draws `v_j`.
//! Keeping them apart means a problem whose noise is switched off consumes
//! exactly the same `θ` sequence as its deterministic counterpart.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone)]
pub struct SampleStreams {
    pub theta: ChaCha20Rng,
    pub noise: ChaCha20Rng,
}

impl SampleStreams {
    pub fn new(seed: u64, trial: u64) -> Self {
        let mut theta = ChaCha20Rng::seed_from_u64(seed);
        theta.set_stream(2 * trial);
        let mut noise = ChaCha20Rng::seed_from_u64(seed);
        noise.set_stream(2 * trial + 1);
        Self { theta, noise }
    }
}
