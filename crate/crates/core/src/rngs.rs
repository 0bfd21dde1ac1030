//! Seed-derived random streams.
//!
//! Every consumer of randomness in an experiment gets its own ChaCha stream
//! keyed by `(seed, stream)`, so adding draws in one component never shifts
//! the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_ENV: u64 = 1;
pub const STREAM_BUFFER: u64 = 2;
pub const STREAM_AGENT: u64 = 3;
pub const STREAM_EVAL: u64 = 4;
pub const STREAM_SCHEDULE: u64 = 5;
pub const STREAM_EXPLORE: u64 = 6;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
