//! Seeded random streams.
//!
//! Every stochastic step draws from ChaCha8 seeded with the run seed and a
//! fixed stream id, so results are identical across platforms and do not
//! depend on the order in which independent components consume randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids, one per consumer.
pub mod stream {
    pub const POSITIONS: u64 = 1;
    pub const RATES: u64 = 2;
    pub const PARTITION: u64 = 3;
    pub const KMEANS: u64 = 4;
    pub const INIT: u64 = 5;
    pub const ARRIVALS: u64 = 6;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
