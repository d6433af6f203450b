//! Per-component random streams. Every component draws from its own ChaCha
//! stream so that, for example, fault randomness never shifts sensor noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    NcSensor = 1,
    NcDiagnosis = 2,
    ScPrimarySensor = 3,
    ScStandbySensor = 4,
    FaultCorruption = 5,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
