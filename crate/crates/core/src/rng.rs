//! Every random draw in the crate comes from a ChaCha stream keyed by the run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes get independent streams so that, for example, changing
/// the number of epochs never perturbs parameter initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Episode = 3,
    Keywords = 4,
    Synth = 5,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
