//! Experiment orchestration for the uavpower simulator.
//!
//! This crate turns the core library into a reproducible experiment runner:
//! run configurations ([`run::RunConfig`]), deterministic episode traces
//! ([`run::EpisodeTrace`]), empirical distribution tables
//! ([`stats::CdfTable`]), and the CSV/manifest emission behind the `uavpower`
//! binary. Everything written to disk is a pure function of the configuration
//! and seeds, so re-running a command reproduces its outputs byte for byte.

pub mod output;
pub mod run;
pub mod stats;

pub use run::{run_episode, AgentKind, EpisodeTrace, Policy, RunConfig, StepRecord};
pub use stats::{empirical_cdf, CdfTable, ZoneCdfs};
