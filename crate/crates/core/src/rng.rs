//! Seeded randomness with named substreams.
//!
//! Every consumer derives its own generator from the scenario seed plus a
//! stream tag (and optionally an index), so turning one subsystem on or off
//! never shifts the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Named substreams of the scenario seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Partition = 2,
    Deviation = 3,
    Hardware = 4,
    Channel = 5,
    Exploration = 6,
    Replay = 7,
    ModelInit = 8,
    Training = 9,
    Clustering = 10,
    Attack = 11,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for `stream` of `seed`.
pub fn substream(seed: u64, stream: Stream) -> SimRng {
    indexed_substream(seed, stream, 0)
}

/// Generator for the `index`-th member of `stream` (per node, per cluster, ...).
pub fn indexed_substream(seed: u64, stream: Stream, index: u64) -> SimRng {
    let mixed = splitmix64(splitmix64(seed ^ splitmix64(stream as u64)) ^ index.wrapping_mul(0xA24B_AED4_963E_E407));
    SimRng::seed_from_u64(mixed)
}
