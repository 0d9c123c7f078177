//! Seed derivation.
//!
//! Every random draw in an experiment descends from one master seed. Each
//! trial gets its own family of ChaCha streams keyed by `(trial, purpose)`,
//! so a trial's outcome never depends on which worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent random streams used within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Prior = 0,
    Target = 1,
    Start = 2,
    Sensor = 3,
    Planner = 4,
}

const STREAMS_PER_TRIAL: u64 = 8;

/// RNG for `purpose` within trial `trial` of the experiment seeded by `master`.
pub fn trial_rng(master: u64, trial: u64, purpose: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial.wrapping_mul(STREAMS_PER_TRIAL) + purpose as u64);
    rng
}

/// Plain seeded RNG for one-off draws.
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
