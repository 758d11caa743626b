//! Seed streams.
//!
//! Every random draw in a run comes from a ChaCha8 generator keyed by the run
//! seed, with the 64-bit stream id built from (simulation, step, purpose). Any
//! simulation step can be regenerated on its own, and simulations can be
//! produced in any order or in parallel without changing their content.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Init = 0,
    Dynamics = 1,
    BirthDeath = 2,
    Sensing = 3,
    ModelInit = 4,
    Shuffle = 5,
    Extraction = 6,
}

/// Step index used for streams that are not tied to a time step.
pub const NO_STEP: u32 = (1 << 28) - 1;

pub fn stream(seed: u64, sim: u32, step: u32, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = ((sim as u64) << 32) | (((step & NO_STEP) as u64) << 4) | purpose as u64;
    rng.set_stream(id);
    rng
}
