//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! run seed and a purpose tag, so adding draws in one place never shifts the
//! sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod stream {
    pub const INIT: u64 = 1;
    pub const BATCHES: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const SYNTHETIC: u64 = 5;
    pub const GRADCHECK: u64 = 6;
    pub const OBJECTIVE_BATCHES: u64 = 7;
}

/// Stream `stream` of the generator seeded with `seed`.
pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
