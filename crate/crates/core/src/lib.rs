//! Temporary overshoots of fold (saddle-node) tipping thresholds.
//!
//! The crate provides generic fold analysis for parameterized ODEs
//! ([`dynsys`]), the Zickfeld monsoon model ([`monsoon`]), deterministic
//! overshoot criteria and simulation-based tipping boundaries ([`tipping`]),
//! and noise-induced escape probabilities ([`escape`]).

pub mod cli;
pub mod dynsys;
pub mod error;
pub mod escape;
pub mod forcing;
pub mod io;
pub mod monsoon;
pub mod numerics;
pub mod tipping;

pub use error::{Error, Result};
