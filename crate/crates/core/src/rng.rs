//! Named, seeded random streams.
//!
//! A stream is keyed by `(master seed, purpose label, indices...)`, so any worker can
//! rebuild exactly the stream it needs without coordination.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// 64-bit key for `(master, label, indices)`.
pub fn derive_key(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ splitmix64(fnv1a(label)));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn stream(master: u64, label: &str, indices: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_key(master, label, indices))
}
