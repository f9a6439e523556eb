//! Counter-based random streams.
//!
//! Every random draw in a simulation is addressed by `(seed, purpose, epoch, index)`.
//! The tuple is mapped to a ChaCha8 key/stream pair, so a given excursion or site
//! block always sees the same numbers no matter which worker thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share key material.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    ExcursionCount = 1,
    Excursion = 2,
    SiteHolding = 3,
    RhoHolding = 4,
    Replica = 5,
    Gaussian = 6,
    VisitHolding = 7,
}

pub fn stream(seed: u64, purpose: Purpose, epoch: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[16..24].copy_from_slice(&epoch.to_le_bytes());
    key[24..].copy_from_slice(b"loctime\0");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
