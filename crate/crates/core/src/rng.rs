//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! experiment seed and a (purpose, round, client) triple, so results do not
//! depend on the order in which clients are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags keeping independent streams apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Dataset = 1,
    Split = 2,
    Smote = 3,
    Partition = 4,
    Adversaries = 5,
    Corruption = 6,
    ModelInit = 7,
    LocalTraining = 8,
    UpdateNoise = 9,
    Selection = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stream for `purpose` at (`round`, `client`).
pub fn stream(seed: u64, purpose: Purpose, round: u64, client: u64) -> SimRng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ purpose as u64);
    h = splitmix64(h ^ round);
    h = splitmix64(h ^ client);
    ChaCha8Rng::seed_from_u64(h)
}
