//! Game-theoretic credit assignment for multiagent continuous control.
//!
//! Each robot joint is an agent with its own Gaussian actor. Agents are credited
//! with a semivalue (Shapley, Banzhaf, leave-one-out, or any distribution over
//! coalition sizes) of their chosen action. Coalition values come from a learned
//! one-step dynamics/reward model followed by a centralised state-value critic.
//!
//! The crate is `no_std` (with `alloc`). File formats, logging and the CLI live in
//! the `semicredit` companion crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod coopgame;
pub mod credit;
pub mod envkit;
mod error;
pub mod numcore;
pub mod policy;
pub mod rng;
pub mod trainer;
pub mod worldmodel;

pub use error::{Error, Result};

/// Crate version, recorded in checkpoint manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
