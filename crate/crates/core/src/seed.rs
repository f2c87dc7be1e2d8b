//! Seed derivation.
//!
//! Every random stream in an experiment is derived from one root seed:
//! `derive(root, stream, index) = splitmix64(splitmix64(root ^ TAG[stream]) ^ index)`,
//! where `TAG` is a fixed per-stream constant and `index` distinguishes
//! repeated draws of the same stream (e.g. the frame number for corruption).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    World,
    Terrain,
    Corruption,
    Disturbance,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::World => 0x5752_4c44_0000_0001,
            Stream::Terrain => 0x5445_5252_0000_0002,
            Stream::Corruption => 0x434f_5252_0000_0003,
            Stream::Disturbance => 0x4449_5354_0000_0004,
        }
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(root: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ stream.tag()) ^ index)
}

pub fn rng(root: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, stream, index))
}
