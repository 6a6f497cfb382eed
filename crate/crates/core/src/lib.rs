//! Stochastic simulation of entanglement distribution over a linear chain
//! of quantum repeaters.
//!
//! The crate models a chain of `n` elementary links between two end
//! parties, each link holding a pair of quantum memories and an
//! intermediate swapping station. Closed-form deterministic rates
//! ([`rates`]) sit beside Monte Carlo estimators ([`sampling`]) and a
//! discrete global/local clock engine ([`clock`]) that simulates
//! synchronous and asynchronous link establishment, including memory
//! decoherence sampled step by step. The [`experiment`] module sweeps
//! parameters, histograms completion times, and persists reproducible run
//! manifests.
//!
//! All randomness flows through seeded, independently-streamed generators,
//! so every result is bit-reproducible from a (seed, parameters) pair
//! regardless of worker count.

pub mod clock;
pub mod error;
pub mod experiment;
mod par;
pub mod phys;
pub mod rates;
pub mod sampling;

pub use error::{Error, Result};
pub use phys::{CoherenceTime, PhysicalConstants, SystemParams};
pub use sampling::RngStream;
