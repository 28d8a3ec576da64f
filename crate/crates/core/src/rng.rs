//! Seeded random streams.
//!
//! Every run owns its generators. Independent consumers (model generation,
//! environment sampling, Monte Carlo trials) get distinct ChaCha streams of
//! the same seed so results do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

/// Stream used to generate a random model from a run seed.
pub const MODEL_STREAM: u64 = 0;
/// Stream used for environment transitions and agent randomisation.
pub const ENV_STREAM: u64 = 1;

pub fn seeded(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(seed: u64, stream: u64) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
