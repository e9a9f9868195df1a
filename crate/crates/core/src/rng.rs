//! Seeded generator streams.
//!
//! Every stochastic routine takes its generator explicitly. Trial `i` of a run
//! seeded with `master` always draws from ChaCha8 stream `i` of that seed, so
//! results do not depend on how trials are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

/// Generator for a single trial.
pub fn trial_rng(master_seed: u64, trial: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Generator for a whole sequential job.
pub fn seeded(master_seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(master_seed)
}
