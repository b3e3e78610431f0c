//! Reinforcement-learning edge caching.
//!
//! A small basestation holds `M` of `F` unit-size files. Every slot it
//! observes a global and a local popularity profile, each driven by its own
//! finite Markov chain, pays a cost for refreshing the cache and for the
//! popularity mass it failed to cache, and picks the cache contents for the
//! next slot.
//!
//! The crate provides:
//!
//! - [`popularity`]: Zipf profiles, popularity Markov chains, request sampling
//!   and quantization of empirical profiles onto chain states.
//! - [`caching`]: cache actions, the lexicographic action space and all cost
//!   functions.
//! - [`oracle`]: the full finite MDP with known transitions, solved exactly by
//!   policy iteration.
//! - [`tabular`]: tabular ε-greedy Q-learning.
//! - [`linear`]: Q-learning with a linear value approximation whose greedy
//!   action is a top-`M` selection, usable when the action space cannot be
//!   enumerated.
//! - [`experiments`]: scenarios, presets, the slot-level simulator, Monte Carlo
//!   averaging and CSV export.

pub mod caching;
pub mod env;
mod csv_util;
mod error;
pub mod experiments;
pub mod linear;
pub mod oracle;
pub mod popularity;
pub mod schedule;
pub mod tabular;

pub use csv_util::{parse_sig17, sig17};
pub use error::{Error, Result};

/// Random stream used throughout the simulator.
///
/// ChaCha8 output is specified independently of platform and crate version
/// details, so seeded traces are reproducible bit for bit.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Creates a [`SimRng`] from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}
