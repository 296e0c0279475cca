//! Decision policies over the environment's continuous action space.
//!
//! Two deterministic baselines ([`act_full_power`], [`act_closest`]) and a
//! soft actor-critic learner ([`sac::SacAgent`]) built on the tape-based
//! networks in [`nn`]. The [`RlEnv`] trait is the thin seam between the
//! training loop and any environment, so the learner can be exercised on toy
//! tasks as well as the full simulator.

pub mod nn;
pub mod sac;

pub use sac::{train, Checkpoint, EpisodeStats, SacAgent, SacParams, TrainLog, UpdateStats};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{PowerAllocation, UavEnv};
use crate::geometry::{MobilityState, Position};
use crate::grid::Grid;
use crate::{Error, Result};

/// One environment interaction stored for off-policy learning.
///
/// `action` is the raw policy output in `[-1, 1]` per dimension, before
/// decoding into transmit powers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Observation before the step.
    pub obs: Vec<f64>,
    /// Raw action taken.
    pub action: Vec<f64>,
    /// Immediate reward.
    pub reward: f64,
    /// Observation after the step.
    pub next_obs: Vec<f64>,
    /// Whether the episode terminated at this step.
    pub done: bool,
}

/// Fixed-capacity ring of transitions with FIFO overwrite.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    /// Empty buffer holding at most `capacity` transitions.
    pub fn new(capacity: usize) -> Result<ReplayBuffer> {
        if capacity == 0 {
            return Err(Error::Validation("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer { capacity, data: Vec::new(), cursor: 0 })
    }

    /// Number of stored transitions.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// True when nothing has been stored yet.
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Maximum number of stored transitions.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Store a transition, evicting the oldest once at capacity.
    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Uniform-with-replacement index sample; errors until `batch` items exist.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize) -> Result<Vec<usize>> {
        if batch == 0 {
            return Err(Error::Validation("batch size must be positive".into()));
        }
        if self.data.len() < batch {
            return Err(Error::Validation(format!(
                "replay buffer holds {} transitions, need {batch} to sample",
                self.data.len()
            )));
        }
        Ok((0..batch).map(|_| rng.gen_range(0..self.data.len())).collect())
    }

    /// Sample `batch` transitions uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize) -> Result<Vec<&Transition>> {
        let idx = self.sample_indices(rng, batch)?;
        Ok(idx.into_iter().map(|i| &self.data[i]).collect())
    }
}

/// Environment interface used by the training loop.
pub trait RlEnv {
    /// Reseed and restart; returns the initial observation.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    /// Apply a raw action in `[-1, 1]^act_dim`; returns
    /// `(next observation, reward, done)`.
    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64, bool)>;
    /// Observation length.
    fn obs_dim(&self) -> usize;
    /// Action length.
    fn act_dim(&self) -> usize;
}

impl RlEnv for UavEnv {
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        Ok(UavEnv::reset(self, seed)?.0)
    }

    fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, f64, bool)> {
        let out = self.step_raw(action)?;
        Ok((out.observation.0, out.reward, out.done))
    }

    fn obs_dim(&self) -> usize {
        self.config().observation_dim()
    }

    fn act_dim(&self) -> usize {
        self.config().action_dim()
    }
}

/// Baseline that transmits at `p_max` from every station to every user.
pub fn act_full_power(num_users: usize, num_bs: usize, p_max: f64) -> Result<PowerAllocation> {
    PowerAllocation::full(num_users, num_bs, p_max)
}

/// Baseline that serves each user at `p_max` from its nearest station only.
///
/// Distance is the full 3-D separation; ties go to the lowest station index,
/// so each user's power fraction is exactly `1 / K`.
pub fn act_closest(
    states: &[MobilityState],
    bs_positions: &[Position],
    p_max: f64,
) -> Result<PowerAllocation> {
    if states.is_empty() {
        return Err(Error::Validation("no users to allocate power for".into()));
    }
    if bs_positions.is_empty() {
        return Err(Error::Validation("no base stations to allocate power from".into()));
    }
    let mut watts = Grid::filled(states.len(), bs_positions.len(), 0.0);
    for (i, state) in states.iter().enumerate() {
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (k, bs) in bs_positions.iter().enumerate() {
            let d = state.position.distance(bs);
            if d < best_dist {
                best_dist = d;
                best = k;
            }
        }
        watts[(i, best)] = p_max;
    }
    PowerAllocation::new(watts, p_max)
}
