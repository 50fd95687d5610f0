//! Simulation and analysis of perfectly private over-the-air aggregation.
//!
//! Clients mask their messages with modulo-zero-sum keys on the torus,
//! transmit with channel-inversion precoding over a fading multiple-access
//! channel, and the server recovers the sum with a single modulo reduction.
//! The crate provides the protocol simulator with three Gaussian-mask
//! baselines, the closed-form distortion of the modulo estimator with its
//! bounds, Gaussian leakage for the baselines, exact finite-group privacy
//! oracles, and the experiment harness behind the `p2aircomp` binary.

pub mod analytics;
pub mod error;
pub mod harness;
pub mod keys;
pub mod numerics;
pub mod oracle;
pub mod protocol;
pub mod rng;

pub use error::{Error, Result};
