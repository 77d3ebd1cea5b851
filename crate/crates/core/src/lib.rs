//! Context-conditioned off-policy meta-RL with trajectory relabeling.
//!
//! Modules, bottom-up:
//!
//! - [`nn`]: dense networks, reverse pass, Adam.
//! - [`envs`]: task families with a queryable per-task reward oracle.
//! - [`pearl`]: probabilistic context encoder, latent-conditioned actor and
//!   twin critics, per-task replay buffers, meta-test adaptation.
//! - [`relabel`]: relabeling strategies (utility softmax, hard-max, Bellman
//!   utility, return-based, random, none) and log-partition tracking.
//! - [`oracle`]: exact tabular checks of the relabeling derivation and the
//!   embedding classifier probe.
//! - [`harness`]: seeded experiment runner, metrics files and plots.

pub mod envs;
mod error;
pub mod harness;
pub mod nn;
pub mod oracle;
pub mod pearl;
pub mod relabel;

pub use error::{Error, Result};
