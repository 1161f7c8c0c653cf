//! Seeding discipline.
//!
//! Every stochastic code path takes an explicit `u64` seed and turns it into
//! a ChaCha stream. Sub-tasks (one trajectory, one planner step, one weight
//! tensor) get *derived* seeds via splitmix64 mixing, so parallel and
//! sequential execution draw exactly the same numbers per task regardless of
//! scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby seeds.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic child seed for sub-task `stream` of a parent seed.
pub fn derive(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream))
}

/// Two-level derivation (e.g. trajectory index, then noise kind).
pub fn derive2(seed: u64, a: u64, b: u64) -> u64 {
    derive(derive(seed, a), b)
}

/// RNG for a given seed. ChaCha is portable: the stream depends only on the
/// seed, never on platform or build flags.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named sub-streams used across the crate, so call sites don't sprinkle
/// magic stream ids.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const STATE: u64 = 3;
    pub const ACTIONS: u64 = 4;
    pub const PROCESS_NOISE: u64 = 5;
    pub const OBS_NOISE: u64 = 6;
    pub const PLAN: u64 = 7;
}
