//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit seed. Independent streams are
//! derived from a parent seed and a tag, so no state is shared between
//! operations and results do not depend on call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a sequence of tags.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

pub fn stream(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn substream(seed: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, tags))
}

// Stream tags, kept distinct so streams never collide.
pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_DROPOUT: u64 = 2;
pub(crate) const TAG_SAMPLE: u64 = 3;
pub(crate) const TAG_SHUFFLE: u64 = 4;
pub(crate) const TAG_DATA: u64 = 5;
