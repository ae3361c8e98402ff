//! Counter-based random streams.
//!
//! Every Monte Carlo path owns independent ChaCha streams keyed by
//! `(master seed, path index, channel)`. Nothing is shared between paths, so
//! results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent sources of randomness within one path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Channel {
    Brownian = 0,
    Stable = 1,
    Poisson = 2,
    SmallJumps = 3,
}

const CHANNELS: u64 = 4;

/// Identifies the randomness of one path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub seed: u64,
    pub path: u64,
}

impl StreamId {
    pub fn new(seed: u64, path: u64) -> Self {
        StreamId { seed, path }
    }

    pub fn rng(&self, channel: Channel) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.path.wrapping_mul(CHANNELS).wrapping_add(channel as u64));
        rng
    }
}
