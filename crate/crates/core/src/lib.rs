//! Seedable grid-world simulator of UAV-assisted IoT data collection under
//! jamming and obstacles, with a two-level DDPG trainer (trajectory options on
//! top, per-slot FDMA bandwidth allocation below) and two baselines.
//!
//! Module map:
//! - [`scenario`]: world configuration, file format and built-in maps
//! - [`channel`]: path loss, LoS, jammer cone gain, SINR and rate
//! - [`energy`]: rotary-wing propulsion power and normalized step cost
//! - [`env`]: two-timescale environment, rewards and episode accounting
//! - [`observation`]: layered maps, UAV-centred padding, frozen feature extractor
//! - [`nn`]: small dense networks with exact gradients and Adam
//! - [`agents`]: replay buffers, DDPG pairs, TBH/TBJN/TDMA agents and training
//! - [`harness`]: train/eval/sweep drivers and CSV exports
//! - [`parallel`]: rayon fan-out with a sequential fallback

// `!(x > 0.0)` style checks reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod channel;
pub mod energy;
pub mod env;
mod error;
pub mod harness;
pub mod nn;
pub mod observation;
pub mod parallel;
pub mod scenario;

pub use error::{Error, Result};

/// Generator behind every random draw in the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Build a generator for `seed` on an independent `stream`.
pub fn seeded_rng(seed: u64, stream: u64) -> SimRng {
    use rand::SeedableRng;
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
