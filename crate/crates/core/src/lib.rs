//! Simulator and learning harness for downlink power allocation to moving UAVs.
//!
//! A set of ground base stations transmits to one or more UAVs over air-to-ground
//! channels. Each UAV combines the signals it receives, and an outage occurs when
//! the combined received power falls below the receiver sensitivity. Because the
//! received power is a sum of independent exponential terms, the per-slot outage
//! probability has a closed hypoexponential form; [`outage`] evaluates it with
//! numerically stable fallbacks for near-degenerate rate sets.
//!
//! On top of the analytics sit a discrete-time environment ([`env`]) with
//! deterministic-path and Gauss-Markov mobility, a soft actor-critic agent with a
//! small built-in reverse-mode tape ([`agents`]), and two baseline policies.

pub mod agents;
pub mod channel;
pub mod env;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod outage;

pub use error::{Error, Result};
