//! Soft actor-critic with a squashed-Gaussian policy, twin critics, and
//! automatic entropy-temperature tuning.
//!
//! The learner follows the standard off-policy recipe: critics regress to a
//! bootstrapped soft target, the policy ascends the entropy-regularized
//! minimum critic value through the re-parameterization trick, and the
//! temperature follows an analytic gradient toward a target entropy. All
//! randomness flows through a single seeded generator owned by the agent, so
//! training runs are bit-reproducible within one build.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::nn::{ln_two_pi, mat_zeros, softplus, Activation, Adam, Mat, Mlp, MlpSpec, Tape};
use super::{ReplayBuffer, RlEnv, Transition};
use crate::grid::Grid;
use crate::{Error, Result};

/// Lower clamp for the policy's log standard deviation.
pub const LOG_STD_MIN: f64 = -20.0;
/// Upper clamp for the policy's log standard deviation.
pub const LOG_STD_MAX: f64 = 2.0;

/// Checkpoint schema version accepted by [`SacAgent::from_checkpoint`].
pub const CHECKPOINT_VERSION: u32 = 1;

/// Hyperparameters for [`SacAgent`].
///
/// Deserialization fills omitted fields from [`SacParams::default`], so run
/// configs only need to spell out the fields they override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacParams {
    /// Hidden layer widths shared by the policy and critic networks.
    pub hidden: Vec<usize>,
    /// Discount factor, in (0, 1).
    pub gamma: f64,
    /// Target-network smoothing coefficient, in (0, 1].
    pub tau: f64,
    /// Policy learning rate.
    pub lr_policy: f64,
    /// Critic learning rate.
    pub lr_critic: f64,
    /// Temperature learning rate.
    pub lr_alpha: f64,
    /// Transitions per gradient step.
    pub batch_size: usize,
    /// Replay buffer capacity.
    pub replay_capacity: usize,
    /// Environment steps driven by uniform random actions before learning.
    pub warmup_steps: u64,
    /// Gradient updates happen every this many environment steps.
    pub update_interval: u64,
    /// Entropy target; `None` selects the conventional `-action_dim`.
    pub target_entropy: Option<f64>,
    /// Initial temperature (must be positive).
    pub init_alpha: f64,
    /// Seed for the agent's private generator and for episode resets.
    pub seed: u64,
}

impl Default for SacParams {
    fn default() -> Self {
        SacParams {
            hidden: vec![256, 256],
            gamma: 0.99,
            tau: 0.005,
            lr_policy: 3e-4,
            lr_critic: 3e-4,
            lr_alpha: 3e-4,
            batch_size: 256,
            replay_capacity: 100_000,
            warmup_steps: 5_000,
            update_interval: 1,
            target_entropy: None,
            init_alpha: 1.0,
            seed: 0,
        }
    }
}

impl SacParams {
    /// Check ranges of all hyperparameters.
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Validation(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Validation(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        for (name, lr) in [
            ("lr_policy", self.lr_policy),
            ("lr_critic", self.lr_critic),
            ("lr_alpha", self.lr_alpha),
        ] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive, got {lr}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be at least 1".into()));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::Validation(format!(
                "replay_capacity {} is smaller than batch_size {}",
                self.replay_capacity, self.batch_size
            )));
        }
        if self.update_interval == 0 {
            return Err(Error::Validation("update_interval must be at least 1".into()));
        }
        if !(self.init_alpha.is_finite() && self.init_alpha > 0.0) {
            return Err(Error::Validation(format!(
                "init_alpha must be positive, got {}",
                self.init_alpha
            )));
        }
        if let Some(h) = self.target_entropy {
            if !h.is_finite() {
                return Err(Error::Validation("target_entropy must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Losses and diagnostics from one gradient update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Squared-error loss of the first critic.
    pub critic_loss_1: f64,
    /// Squared-error loss of the second critic.
    pub critic_loss_2: f64,
    /// Entropy-regularized policy objective (lower is better).
    pub policy_loss: f64,
    /// Temperature objective value at the pre-update temperature.
    pub temperature_loss: f64,
    /// Monte Carlo estimate of the policy entropy on this batch.
    pub entropy_estimate: f64,
    /// Temperature used for this update (before its own adjustment).
    pub alpha: f64,
    /// Mean bootstrapped critic target over the batch.
    pub mean_target: f64,
}

/// Soft actor-critic learner over a continuous `[-1, 1]^act_dim` action box.
#[derive(Clone, Debug)]
pub struct SacAgent {
    obs_dim: usize,
    act_dim: usize,
    params: SacParams,
    policy: Mlp,
    q1: Mlp,
    q2: Mlp,
    q1_target: Mlp,
    q2_target: Mlp,
    log_alpha: Mat,
    opt_policy: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    opt_alpha: Adam,
    buffer: ReplayBuffer,
    rng: ChaCha12Rng,
    env_steps: u64,
    updates: u64,
}

/// Serializable snapshot of everything a frozen or resumed agent needs.
///
/// The replay buffer and generator stream are deliberately not captured:
/// deterministic inference depends only on the parameters below, and a
/// resumed training run draws from a fresh stream derived from the seed and
/// step counter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Schema version, currently [`CHECKPOINT_VERSION`].
    pub version: u32,
    /// Observation length the networks were built for.
    pub obs_dim: usize,
    /// Action length the networks were built for.
    pub act_dim: usize,
    /// Hyperparameters in effect.
    pub params: SacParams,
    policy: Mlp,
    q1: Mlp,
    q2: Mlp,
    q1_target: Mlp,
    q2_target: Mlp,
    log_alpha: f64,
    opt_policy: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    opt_alpha: Adam,
    /// Environment steps taken when the snapshot was written.
    pub env_steps: u64,
    /// Gradient updates applied when the snapshot was written.
    pub updates: u64,
}

fn finite_slice(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Forward the policy and split its output into mean and clamped log-std.
fn policy_stats(policy: &Mlp, act_dim: usize, obs: &Mat) -> (Mat, Mat) {
    let out = policy.forward(obs);
    let b = out.rows();
    let mut mean = mat_zeros(b, act_dim);
    let mut log_std = mat_zeros(b, act_dim);
    for i in 0..b {
        let row = out.row(i);
        mean.row_mut(i).copy_from_slice(&row[..act_dim]);
        for (dst, &src) in log_std.row_mut(i).iter_mut().zip(&row[act_dim..]) {
            *dst = src.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }
    (mean, log_std)
}

/// Per-dimension log-density of the squashed Gaussian at `u = mean + std*xi`,
/// including the tanh change-of-variables correction.
fn squashed_logp_dim(xi: f64, log_std: f64, u: f64) -> f64 {
    -0.5 * xi * xi - 0.5 * ln_two_pi() - log_std
        + 2.0 * u + 2.0 * softplus(-2.0 * u) - 2.0 * core::f64::consts::LN_2
}

/// Sample squashed actions and their log-probabilities without a tape.
fn sample_actions_plain<R: Rng + ?Sized>(
    policy: &Mlp,
    act_dim: usize,
    obs: &Mat,
    rng: &mut R,
) -> (Mat, Mat) {
    let (mean, log_std) = policy_stats(policy, act_dim, obs);
    let b = obs.rows();
    let mut actions = mat_zeros(b, act_dim);
    let mut logp = mat_zeros(b, 1);
    for i in 0..b {
        let mut acc = 0.0;
        for d in 0..act_dim {
            let xi: f64 = rng.sample(StandardNormal);
            let ls = log_std[(i, d)];
            let u = mean[(i, d)] + ls.exp() * xi;
            actions[(i, d)] = u.tanh();
            acc += squashed_logp_dim(xi, ls, u);
        }
        logp[(i, 0)] = acc;
    }
    (actions, logp)
}

/// Concatenate observation and action batches column-wise.
fn concat_obs_act(obs: &Mat, act: &Mat) -> Mat {
    assert_eq!(obs.rows(), act.rows());
    let mut out = mat_zeros(obs.rows(), obs.cols() + act.cols());
    for i in 0..obs.rows() {
        let row = out.row_mut(i);
        row[..obs.cols()].copy_from_slice(obs.row(i));
        row[obs.cols()..].copy_from_slice(act.row(i));
    }
    out
}

/// Both critic losses and their parameter gradients for fixed inputs/targets.
///
/// Public so external harnesses can verify the exact production gradients
/// (for example against finite differences) without reaching into the agent.
pub fn critic_losses_on_tape(
    q1: &Mlp,
    q2: &Mlp,
    inputs: &Mat,
    targets: &Mat,
) -> (f64, f64, Vec<Mat>, Vec<Mat>) {
    let mut tape = Tape::new();
    let x = tape.leaf(inputs.clone());
    let y = tape.leaf(targets.clone());
    let p1 = q1.register(&mut tape);
    let p2 = q2.register(&mut tape);
    let o1 = q1.forward_on(&mut tape, x, &p1);
    let o2 = q2.forward_on(&mut tape, x, &p2);
    let d1 = tape.sub(o1, y);
    let d2 = tape.sub(o2, y);
    let s1 = tape.mul_elem(d1, d1);
    let s2 = tape.mul_elem(d2, d2);
    let l1 = tape.mean_all(s1);
    let l2 = tape.mean_all(s2);
    let total = tape.add(l1, l2);
    let grads = tape.backward(total);
    let g1 = p1.iter().map(|id| grads.get(*id).clone()).collect();
    let g2 = p2.iter().map(|id| grads.get(*id).clone()).collect();
    (tape.scalar(l1), tape.scalar(l2), g1, g2)
}

/// Plain critic loss used by the finite-difference tests.
#[cfg(test)]
fn critic_loss_plain(q: &Mlp, inputs: &Mat, targets: &Mat) -> f64 {
    let out = q.forward(inputs);
    let mut acc = 0.0;
    for (o, t) in out.as_slice().iter().zip(targets.as_slice()) {
        acc += (o - t) * (o - t);
    }
    acc / out.as_slice().len() as f64
}

/// Policy loss, its gradients, and the batch mean log-probability for fixed
/// exploration noise `xi`.
///
/// Public for the same external-verification reason as
/// [`critic_losses_on_tape`].
pub fn policy_loss_on_tape(
    policy: &Mlp,
    q1: &Mlp,
    q2: &Mlp,
    act_dim: usize,
    obs: &Mat,
    xi: &Mat,
    alpha: f64,
) -> (f64, Vec<Mat>, f64) {
    let b = obs.rows();
    let mut tape = Tape::new();
    let obs_leaf = tape.leaf(obs.clone());
    let xi_leaf = tape.leaf(xi.clone());
    let pol_params = policy.register(&mut tape);
    let out = policy.forward_on(&mut tape, obs_leaf, &pol_params);
    let mean = tape.slice_cols(out, 0, act_dim);
    let raw_ls = tape.slice_cols(out, act_dim, 2 * act_dim);
    let log_std = tape.clamp(raw_ls, LOG_STD_MIN, LOG_STD_MAX);
    let std = tape.exp(log_std);
    let noise = tape.mul_elem(std, xi_leaf);
    let u = tape.add(mean, noise);
    let action = tape.tanh(u);

    // log pi per dimension:
    //   -xi^2/2 - ln(2 pi)/2 - log_std + 2 u + 2 softplus(-2 u) - 2 ln 2
    let mut const_term = mat_zeros(b, act_dim);
    for (c, x) in const_term.as_mut_slice().iter_mut().zip(xi.as_slice()) {
        *c = -0.5 * x * x - 0.5 * ln_two_pi();
    }
    let const_leaf = tape.leaf(const_term);
    let neg_ls = tape.scale(log_std, -1.0);
    let two_u = tape.scale(u, 2.0);
    let neg_two_u = tape.scale(u, -2.0);
    let sp = tape.softplus(neg_two_u);
    let two_sp = tape.scale(sp, 2.0);
    let squash = tape.add(two_u, two_sp);
    let squash = tape.add_scalar(squash, -2.0 * core::f64::consts::LN_2);
    let per_dim = tape.add(const_leaf, neg_ls);
    let per_dim = tape.add(per_dim, squash);
    let logp = tape.row_sum(per_dim);

    let q_in = tape.concat_cols(obs_leaf, action);
    let q1_params = q1.register(&mut tape);
    let q2_params = q2.register(&mut tape);
    let q1_val = q1.forward_on(&mut tape, q_in, &q1_params);
    let q2_val = q2.forward_on(&mut tape, q_in, &q2_params);
    let q_min = tape.min_elem(q1_val, q2_val);
    let weighted = tape.scale(logp, alpha);
    let objective = tape.sub(weighted, q_min);
    let loss = tape.mean_all(objective);

    let mean_logp =
        tape.value(logp).as_slice().iter().sum::<f64>() / b as f64;
    let grads = tape.backward(loss);
    let g = pol_params.iter().map(|id| grads.get(*id).clone()).collect();
    (tape.scalar(loss), g, mean_logp)
}

/// Plain policy loss used by the finite-difference tests.
#[cfg(test)]
fn policy_loss_plain(
    policy: &Mlp,
    q1: &Mlp,
    q2: &Mlp,
    act_dim: usize,
    obs: &Mat,
    xi: &Mat,
    alpha: f64,
) -> f64 {
    let (mean, log_std) = policy_stats(policy, act_dim, obs);
    let b = obs.rows();
    let mut actions = mat_zeros(b, act_dim);
    let mut logp = vec![0.0; b];
    for i in 0..b {
        for d in 0..act_dim {
            let x = xi[(i, d)];
            let ls = log_std[(i, d)];
            let u = mean[(i, d)] + ls.exp() * x;
            actions[(i, d)] = u.tanh();
            logp[i] += squashed_logp_dim(x, ls, u);
        }
    }
    let q_in = concat_obs_act(obs, &actions);
    let v1 = q1.forward(&q_in);
    let v2 = q2.forward(&q_in);
    let mut acc = 0.0;
    for i in 0..b {
        acc += alpha * logp[i] - v1[(i, 0)].min(v2[(i, 0)]);
    }
    acc / b as f64
}

impl SacAgent {
    /// Fresh agent for the given observation/action dimensions.
    pub fn new(obs_dim: usize, act_dim: usize, params: SacParams) -> Result<SacAgent> {
        params.validate()?;
        if obs_dim == 0 || act_dim == 0 {
            return Err(Error::Validation(
                "observation and action dimensions must be positive".into(),
            ));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
        let policy_spec = MlpSpec {
            inputs: obs_dim,
            hidden: params.hidden.clone(),
            outputs: 2 * act_dim,
            activation: Activation::Relu,
        };
        let critic_spec = MlpSpec {
            inputs: obs_dim + act_dim,
            hidden: params.hidden.clone(),
            outputs: 1,
            activation: Activation::Relu,
        };
        let policy = Mlp::init(policy_spec, &mut rng);
        let q1 = Mlp::init(critic_spec.clone(), &mut rng);
        let q2 = Mlp::init(critic_spec, &mut rng);
        let q1_target = q1.clone();
        let q2_target = q2.clone();
        let log_alpha = Grid::filled(1, 1, params.init_alpha.ln());
        let opt_policy = Adam::new(params.lr_policy, &policy.params());
        let opt_q1 = Adam::new(params.lr_critic, &q1.params());
        let opt_q2 = Adam::new(params.lr_critic, &q2.params());
        let opt_alpha = Adam::new(params.lr_alpha, &[&log_alpha]);
        let buffer = ReplayBuffer::new(params.replay_capacity)?;
        Ok(SacAgent {
            obs_dim,
            act_dim,
            params,
            policy,
            q1,
            q2,
            q1_target,
            q2_target,
            log_alpha,
            opt_policy,
            opt_q1,
            opt_q2,
            opt_alpha,
            buffer,
            rng,
            env_steps: 0,
            updates: 0,
        })
    }

    /// Observation length.
    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    /// Action length.
    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Hyperparameters in effect.
    pub fn params(&self) -> &SacParams {
        &self.params
    }

    /// Current entropy temperature `exp(log_alpha)`.
    pub fn alpha(&self) -> f64 {
        self.log_alpha[(0, 0)].exp()
    }

    /// Entropy target (explicit, or `-act_dim` by convention).
    pub fn target_entropy(&self) -> f64 {
        self.params.target_entropy.unwrap_or(-(self.act_dim as f64))
    }

    /// Environment steps taken so far.
    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    /// Gradient updates applied so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Transitions currently stored for replay.
    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Store one transition for later replay.
    pub fn observe(&mut self, t: Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim
            || t.next_obs.len() != self.obs_dim
            || t.action.len() != self.act_dim
        {
            return Err(Error::Validation(format!(
                "transition shape ({}, {}, {}) does not match agent dims ({}, {})",
                t.obs.len(),
                t.action.len(),
                t.next_obs.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        self.buffer.push(t);
        Ok(())
    }

    /// Policy action for one observation using an external generator.
    ///
    /// Deterministic mode returns `tanh(mean)`; stochastic mode samples
    /// `tanh(mean + std * xi)`. Every component lies strictly inside
    /// `(-1, 1)`.
    pub fn act_with<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        deterministic: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if obs.len() != self.obs_dim {
            return Err(Error::Validation(format!(
                "observation length {} does not match agent dim {}",
                obs.len(),
                self.obs_dim
            )));
        }
        if !finite_slice(obs) {
            return Err(Error::Numeric("non-finite observation".into()));
        }
        let obs_mat = Grid::from_vec(1, self.obs_dim, obs.to_vec());
        let (mean, log_std) = policy_stats(&self.policy, self.act_dim, &obs_mat);
        let mut action = Vec::with_capacity(self.act_dim);
        for d in 0..self.act_dim {
            let u = if deterministic {
                mean[(0, d)]
            } else {
                let xi: f64 = rng.sample(StandardNormal);
                mean[(0, d)] + log_std[(0, d)].exp() * xi
            };
            action.push(u.tanh());
        }
        if !finite_slice(&action) {
            return Err(Error::Numeric("policy produced a non-finite action".into()));
        }
        Ok(action)
    }

    /// Policy action for one observation using the agent's own generator.
    pub fn act(&mut self, obs: &[f64], deterministic: bool) -> Result<Vec<f64>> {
        let mut rng = std::mem::replace(&mut self.rng, ChaCha12Rng::seed_from_u64(0));
        let result = self.act_with(obs, deterministic, &mut rng);
        self.rng = rng;
        result
    }

    fn batch_mats(&self, batch: &[Transition]) -> Result<(Mat, Mat, Mat, Mat, Mat)> {
        let b = batch.len();
        if b == 0 {
            return Err(Error::Validation("update batch is empty".into()));
        }
        let mut obs = mat_zeros(b, self.obs_dim);
        let mut act = mat_zeros(b, self.act_dim);
        let mut rew = mat_zeros(b, 1);
        let mut next = mat_zeros(b, self.obs_dim);
        let mut done = mat_zeros(b, 1);
        for (i, t) in batch.iter().enumerate() {
            if t.obs.len() != self.obs_dim
                || t.next_obs.len() != self.obs_dim
                || t.action.len() != self.act_dim
            {
                return Err(Error::Validation(format!(
                    "transition {i} shape does not match agent dims"
                )));
            }
            obs.row_mut(i).copy_from_slice(&t.obs);
            act.row_mut(i).copy_from_slice(&t.action);
            rew[(i, 0)] = t.reward;
            next.row_mut(i).copy_from_slice(&t.next_obs);
            done[(i, 0)] = if t.done { 1.0 } else { 0.0 };
        }
        Ok((obs, act, rew, next, done))
    }

    /// One gradient update on an explicit batch.
    ///
    /// Order of operations: critics regress to the bootstrapped soft target,
    /// the policy ascends against the freshly updated critics, the
    /// temperature follows its analytic gradient, and finally the target
    /// critics take a Polyak step. A non-finite loss aborts with
    /// [`Error::Numeric`] before the offending parameters are overwritten.
    pub fn update_batch(&mut self, batch: &[Transition]) -> Result<UpdateStats> {
        let (obs, act, rew, next, done) = self.batch_mats(batch)?;
        let b = batch.len();
        let alpha = self.alpha();

        // Bootstrapped target from the target critics and a fresh action.
        let (next_act, next_logp) =
            sample_actions_plain(&self.policy, self.act_dim, &next, &mut self.rng);
        let next_in = concat_obs_act(&next, &next_act);
        let t1 = self.q1_target.forward(&next_in);
        let t2 = self.q2_target.forward(&next_in);
        let mut target = mat_zeros(b, 1);
        let mut target_sum = 0.0;
        for i in 0..b {
            let soft = t1[(i, 0)].min(t2[(i, 0)]) - alpha * next_logp[(i, 0)];
            let y = rew[(i, 0)] + self.params.gamma * (1.0 - done[(i, 0)]) * soft;
            target[(i, 0)] = y;
            target_sum += y;
        }
        let mean_target = target_sum / b as f64;
        if !mean_target.is_finite() {
            return Err(Error::Numeric("non-finite critic target".into()));
        }

        // Critic updates.
        let critic_in = concat_obs_act(&obs, &act);
        let (l1, l2, g1, g2) = critic_losses_on_tape(&self.q1, &self.q2, &critic_in, &target);
        if !(l1.is_finite() && l2.is_finite()) {
            return Err(Error::Numeric(format!("non-finite critic loss ({l1}, {l2})")));
        }
        let g1_refs: Vec<&Mat> = g1.iter().collect();
        self.opt_q1.step(&mut self.q1.params_mut(), &g1_refs);
        let g2_refs: Vec<&Mat> = g2.iter().collect();
        self.opt_q2.step(&mut self.q2.params_mut(), &g2_refs);

        // Policy update against the updated critics.
        let mut xi = mat_zeros(b, self.act_dim);
        for e in xi.as_mut_slice() {
            *e = self.rng.sample(StandardNormal);
        }
        let (policy_loss, pg, mean_logp) = policy_loss_on_tape(
            &self.policy,
            &self.q1,
            &self.q2,
            self.act_dim,
            &obs,
            &xi,
            alpha,
        );
        if !policy_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite policy loss {policy_loss}")));
        }
        let pg_refs: Vec<&Mat> = pg.iter().collect();
        self.opt_policy.step(&mut self.policy.params_mut(), &pg_refs);

        // Temperature: descend -log_alpha * (mean log pi + target entropy),
        // whose gradient in log_alpha is the analytic -(mean_logp + target).
        let drift = mean_logp + self.target_entropy();
        let temperature_loss = -self.log_alpha[(0, 0)] * drift;
        if !temperature_loss.is_finite() {
            return Err(Error::Numeric("non-finite temperature loss".into()));
        }
        let grad_alpha = Grid::filled(1, 1, -drift);
        let mut log_alpha = std::mem::replace(&mut self.log_alpha, mat_zeros(1, 1));
        self.opt_alpha.step(&mut [&mut log_alpha], &[&grad_alpha]);
        self.log_alpha = log_alpha;

        // Target critics trail the critics.
        self.q1_target.polyak_from(&self.q1, self.params.tau);
        self.q2_target.polyak_from(&self.q2, self.params.tau);

        self.updates += 1;
        Ok(UpdateStats {
            critic_loss_1: l1,
            critic_loss_2: l2,
            policy_loss,
            temperature_loss,
            entropy_estimate: -mean_logp,
            alpha,
            mean_target,
        })
    }

    /// Sample a batch from the internal buffer and update once.
    pub fn update_from_buffer(&mut self) -> Result<UpdateStats> {
        let batch_size = self.params.batch_size;
        let indices = {
            let mut rng = std::mem::replace(&mut self.rng, ChaCha12Rng::seed_from_u64(0));
            let r = self.buffer.sample_indices(&mut rng, batch_size);
            self.rng = rng;
            r?
        };
        let batch: Vec<Transition> =
            indices.into_iter().map(|i| self.buffer.sample_ref(i).clone()).collect();
        self.update_batch(&batch)
    }

    /// Snapshot the agent's learned state.
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            params: self.params.clone(),
            policy: self.policy.clone(),
            q1: self.q1.clone(),
            q2: self.q2.clone(),
            q1_target: self.q1_target.clone(),
            q2_target: self.q2_target.clone(),
            log_alpha: self.log_alpha[(0, 0)],
            opt_policy: self.opt_policy.clone(),
            opt_q1: self.opt_q1.clone(),
            opt_q2: self.opt_q2.clone(),
            opt_alpha: self.opt_alpha.clone(),
            env_steps: self.env_steps,
            updates: self.updates,
        }
    }

    /// Rebuild an agent from a snapshot.
    ///
    /// The replay buffer starts empty and the generator starts a fresh
    /// stream derived from the seed and step counter, so deterministic
    /// actions are bit-identical to the saved agent's while resumed training
    /// is deterministic without replaying the original stream.
    pub fn from_checkpoint(cp: Checkpoint) -> Result<SacAgent> {
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "checkpoint version {} is not supported (expected {})",
                cp.version, CHECKPOINT_VERSION
            )));
        }
        cp.params.validate()?;
        if cp.policy.spec().inputs != cp.obs_dim
            || cp.policy.spec().outputs != 2 * cp.act_dim
            || cp.q1.spec().inputs != cp.obs_dim + cp.act_dim
        {
            return Err(Error::Validation(
                "checkpoint network shapes do not match its stated dimensions".into(),
            ));
        }
        let rng_seed = cp
            .params
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(cp.env_steps);
        let buffer = ReplayBuffer::new(cp.params.replay_capacity)?;
        Ok(SacAgent {
            obs_dim: cp.obs_dim,
            act_dim: cp.act_dim,
            params: cp.params,
            policy: cp.policy,
            q1: cp.q1,
            q2: cp.q2,
            q1_target: cp.q1_target,
            q2_target: cp.q2_target,
            log_alpha: Grid::filled(1, 1, cp.log_alpha),
            opt_policy: cp.opt_policy,
            opt_q1: cp.opt_q1,
            opt_q2: cp.opt_q2,
            opt_alpha: cp.opt_alpha,
            buffer,
            rng: ChaCha12Rng::seed_from_u64(rng_seed),
            env_steps: cp.env_steps,
            updates: cp.updates,
        })
    }

    /// Write a checkpoint as JSON.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Read a checkpoint written by [`SacAgent::save`].
    pub fn load(path: &Path) -> Result<SacAgent> {
        let text = std::fs::read_to_string(path)?;
        let cp: Checkpoint = serde_json::from_str(&text)?;
        SacAgent::from_checkpoint(cp)
    }
}

impl ReplayBuffer {
    /// Direct access to a stored transition by index.
    fn sample_ref(&self, index: usize) -> &Transition {
        &self.data[index]
    }
}

/// Per-episode summary passed to the training hook.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    /// Zero-based episode index.
    pub index: u64,
    /// Environment steps inside this episode.
    pub steps: u64,
    /// Undiscounted reward sum over the episode.
    pub total_reward: f64,
    /// Total environment steps taken when the episode ended.
    pub env_steps: u64,
    /// Total gradient updates applied when the episode ended.
    pub updates: u64,
}

/// Summary of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Environment steps consumed.
    pub env_steps: u64,
    /// Gradient updates applied.
    pub updates: u64,
    /// Completed episodes.
    pub episodes: u64,
    /// Undiscounted return of each completed episode, in order.
    pub episode_returns: Vec<f64>,
    /// Temperature after training.
    pub final_alpha: f64,
}

/// Run the interaction loop for `budget` environment steps.
///
/// Episodes reset the environment with `params.seed + episode_index`. During
/// warmup, actions are uniform on the box; afterwards the stochastic policy
/// acts and one gradient update runs every `update_interval` steps (once the
/// buffer can fill a batch). `on_episode` fires after every completed
/// episode — evaluation and checkpointing live in that hook; an error from it
/// or from an update aborts training.
pub fn train<E, F>(
    env: &mut E,
    agent: &mut SacAgent,
    budget: u64,
    mut on_episode: F,
) -> Result<TrainLog>
where
    E: RlEnv + ?Sized,
    F: FnMut(&SacAgent, &EpisodeStats) -> Result<()>,
{
    if env.obs_dim() != agent.obs_dim || env.act_dim() != agent.act_dim {
        return Err(Error::Validation(format!(
            "environment dims ({}, {}) do not match agent dims ({}, {})",
            env.obs_dim(),
            env.act_dim(),
            agent.obs_dim,
            agent.act_dim
        )));
    }
    let mut log = TrainLog {
        env_steps: 0,
        updates: 0,
        episodes: 0,
        episode_returns: Vec::new(),
        final_alpha: agent.alpha(),
    };
    if budget == 0 {
        return Ok(log);
    }
    let mut episode: u64 = 0;
    let mut obs = env.reset(agent.params.seed.wrapping_add(episode))?;
    let mut episode_reward = 0.0;
    let mut episode_steps: u64 = 0;
    for _ in 0..budget {
        let action = if agent.env_steps < agent.params.warmup_steps {
            (0..agent.act_dim).map(|_| agent.rng.gen::<f64>() * 2.0 - 1.0).collect()
        } else {
            agent.act(&obs, false)?
        };
        let (next_obs, reward, done) = env.step(&action)?;
        agent.observe(Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward,
            next_obs: next_obs.clone(),
            done,
        })?;
        obs = next_obs;
        agent.env_steps += 1;
        episode_reward += reward;
        episode_steps += 1;
        log.env_steps += 1;

        if agent.env_steps >= agent.params.warmup_steps
            && agent.buffer.len() >= agent.params.batch_size
            && agent.env_steps % agent.params.update_interval == 0
        {
            agent.update_from_buffer()?;
            log.updates += 1;
        }

        if done {
            log.episodes += 1;
            log.episode_returns.push(episode_reward);
            let stats = EpisodeStats {
                index: episode,
                steps: episode_steps,
                total_reward: episode_reward,
                env_steps: agent.env_steps,
                updates: agent.updates,
            };
            on_episode(agent, &stats)?;
            episode += 1;
            episode_reward = 0.0;
            episode_steps = 0;
            obs = env.reset(agent.params.seed.wrapping_add(episode))?;
        }
    }
    log.final_alpha = agent.alpha();
    Ok(log)
}
