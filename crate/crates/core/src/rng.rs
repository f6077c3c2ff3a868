//! Seeded random number generation.
//!
//! Everything random in the crate is driven by ChaCha8 so that a seed fully
//! determines the output. Independent sub-streams are selected with the
//! ChaCha stream id rather than by reseeding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name recorded in calibration tables.
pub const RNG_NAME: &str = "chacha8-stream-per-block";

pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for sub-stream `stream` of `seed`.
pub fn seeded_stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
