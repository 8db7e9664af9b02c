//! Named random streams derived from one master seed.
//!
//! Every consumer of randomness asks for a generator by purpose and, where work is
//! split across samples, by index. Streams never depend on thread count or on the
//! order in which other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Sampling = 1,
    Splitting = 2,
    Noise = 3,
    Init = 4,
    Shuffle = 5,
    Augment = 6,
    Pilot = 7,
    CrossValidation = 8,
}

/// Generator for `(master, purpose, index)`.
pub fn stream(master: u64, purpose: Purpose, index: u64) -> StreamRng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&index.to_le_bytes());
    seed[24..].copy_from_slice(b"chromfit");
    ChaCha8Rng::from_seed(seed)
}
