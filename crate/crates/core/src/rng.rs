//! Seeding rules.
//!
//! Every random draw in the crate comes from [`ChaCha8Rng`] seeded through
//! `SeedableRng::seed_from_u64`, so a 64-bit seed reproduces the same stream on
//! every platform. Independent streams are derived from a base seed:
//!
//! * restart `k` of a multi-start run uses `base ^ k` ([`restart_seed`]);
//! * named sub-streams (features, proxies, representatives, ...) use
//!   `base ^ tag` where `tag` is a fixed constant ([`stream_seed`]).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Sub-stream tags.
pub mod stream {
    pub const FEATURES: u64 = 0;
    pub const PROXIES: u64 = 0x5052_4f58_0000_0000;
    pub const REPRESENTATIVES: u64 = 0x5245_5052_0000_0000;
    pub const STATES: u64 = 0x5354_4154_0000_0000;
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn restart_seed(base: u64, restart: usize) -> u64 {
    base ^ restart as u64
}

pub fn stream_seed(base: u64, tag: u64) -> u64 {
    base ^ tag
}
