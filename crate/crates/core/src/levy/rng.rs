//! Counter-based random streams keyed by `(master seed, replication, purpose)`.
//!
//! Every replication draws from its own ChaCha20 stream, so results do not
//! depend on how replications are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// What a stream is used for; distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Driver = 1,
    InitialState = 2,
    ExactSampler = 3,
    MonteCarlo = 4,
    Misc = 15,
}

pub fn stream(master_seed: u64, replication: u64, purpose: Purpose) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(replication.wrapping_mul(16).wrapping_add(purpose as u64));
    rng
}
