//! Run configurations, policies, and deterministic episode traces.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use uavpower::agents::{act_closest, act_full_power, SacAgent, SacParams};
use uavpower::channel::path_gain_linear;
use uavpower::env::{PowerAllocation, ScenarioConfig, UavEnv};
use uavpower::geometry::link_geometry;
use uavpower::outage::user_outage;
use uavpower::{Error, Result};

/// Which controller a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Learned soft actor-critic policy.
    Sac,
    /// Every station at maximum power.
    FullPower,
    /// Nearest station at maximum power.
    Closest,
}

impl AgentKind {
    /// Column label used in figure CSVs (`COMP` is the full-power comparison
    /// series).
    pub fn label(&self) -> &'static str {
        match self {
            AgentKind::Sac => "SAC",
            AgentKind::FullPower => "COMP",
            AgentKind::Closest => "Closest",
        }
    }

    /// Parse a label or CLI name.
    pub fn parse(name: &str) -> Result<AgentKind> {
        match name {
            "sac" | "SAC" => Ok(AgentKind::Sac),
            "full_power" | "COMP" => Ok(AgentKind::FullPower),
            "closest" | "Closest" => Ok(AgentKind::Closest),
            other => Err(Error::Validation(format!(
                "unknown policy '{other}' (expected sac, full_power, or closest)"
            ))),
        }
    }
}

/// A scenario referenced by registry name or spelled out inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    /// Name in the built-in registry.
    Name(String),
    /// Full inline configuration.
    Inline(Box<ScenarioConfig>),
}

impl ScenarioRef {
    /// Resolve to a concrete scenario.
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        match self {
            ScenarioRef::Name(name) => ScenarioConfig::builtin(name),
            ScenarioRef::Inline(cfg) => {
                cfg.validate()?;
                Ok((**cfg).clone())
            }
        }
    }
}

fn default_eval_episodes() -> u32 {
    50
}

/// Everything a `train` run needs, read from a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Scenario to run in.
    pub scenario: ScenarioRef,
    /// Controller to train or evaluate.
    pub agent: AgentKind,
    /// Learner hyperparameters; defaults apply when omitted.
    #[serde(default)]
    pub sac: Option<SacParams>,
    /// Training budget in environment steps.
    #[serde(default)]
    pub budget: u64,
    /// Deterministic evaluation episodes after training.
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: u32,
    /// Base seed: training uses it directly, evaluation episode `j` uses
    /// `seed + j`.
    #[serde(default)]
    pub seed: u64,
    /// Write `checkpoint_<episode>.json` every this many episodes.
    #[serde(default)]
    pub checkpoint_every_episodes: Option<u64>,
}

impl RunConfig {
    /// Parse and sanity-check a config document.
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("run config: {e}")))?;
        cfg.scenario.resolve()?;
        if let Some(p) = &cfg.sac {
            p.validate()?;
        }
        Ok(cfg)
    }

    /// Learner hyperparameters with the run seed folded in.
    pub fn sac_params(&self) -> SacParams {
        let mut p = self.sac.clone().unwrap_or_default();
        p.seed = self.seed;
        p
    }
}

/// A controller that maps environment state to a power allocation.
pub enum Policy {
    /// Every station at `p_max`.
    FullPower,
    /// Nearest station at `p_max`.
    Closest,
    /// Frozen learned policy, acted deterministically.
    Sac(Box<SacAgent>),
}

impl Policy {
    /// Figure-CSV label of this policy.
    pub fn label(&self) -> &'static str {
        match self {
            Policy::FullPower => AgentKind::FullPower.label(),
            Policy::Closest => AgentKind::Closest.label(),
            Policy::Sac(_) => AgentKind::Sac.label(),
        }
    }

    /// Allocation for the environment's current state.
    pub fn allocate(&self, env: &UavEnv) -> Result<PowerAllocation> {
        let cfg = env.config();
        match self {
            Policy::FullPower => {
                act_full_power(cfg.num_users, cfg.num_bs(), cfg.p_max)
            }
            Policy::Closest => {
                act_closest(env.states(), &cfg.area.bs_positions, cfg.p_max)
            }
            Policy::Sac(agent) => {
                // Deterministic inference draws nothing from the generator.
                let mut rng = ChaCha12Rng::seed_from_u64(0);
                let raw = agent.act_with(env.observation().as_slice(), true, &mut rng)?;
                env.action_decode(&raw)
            }
        }
    }
}

/// State, action, and outcome of one environment step.
///
/// The record keeps enough pre-step state (positions and line-of-sight
/// flags) to recompute every outage probability from scratch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Slot index.
    pub t: u32,
    /// Per-user position `[x, y, z]` before the step.
    pub positions: Vec<[f64; 3]>,
    /// Line-of-sight flag per user (rows) and station (columns).
    pub los: Vec<Vec<bool>>,
    /// Transmit powers applied, per user and station (watts).
    pub watts: Vec<Vec<f64>>,
    /// Per-user outage probability.
    pub epsilons: Vec<f64>,
    /// Per-user outage threshold at the pre-step position.
    pub thresholds: Vec<f64>,
    /// Per-user critical-zone membership at the pre-step position.
    pub in_zone: Vec<bool>,
    /// Total power as a fraction of `N * K * p_max`.
    pub power_fraction: f64,
    /// Per-user power as a fraction of `K * p_max`.
    pub user_fractions: Vec<f64>,
    /// Reward granted for the step.
    pub reward: f64,
}

/// Deterministic record of one evaluation episode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeTrace {
    /// Scenario the episode ran in.
    pub scenario: String,
    /// Policy label (`SAC`, `COMP`, or `Closest`).
    pub policy: &'static str,
    /// Seed passed to the environment reset.
    pub seed: u64,
    /// One record per step, `t = 0 .. episode_length`.
    pub steps: Vec<StepRecord>,
}

// Serde needs an owned label when reading traces back; keep the write-side
// type ergonomic and leak the handful of distinct labels on read.
impl<'de> Deserialize<'de> for EpisodeTrace {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        struct Raw {
            scenario: String,
            policy: String,
            seed: u64,
            steps: Vec<StepRecord>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let policy = AgentKind::parse(&raw.policy)
            .map_err(|e| serde::de::Error::custom(e.to_string()))?
            .label();
        Ok(EpisodeTrace {
            scenario: raw.scenario,
            policy,
            seed: raw.seed,
            steps: raw.steps,
        })
    }
}

/// Run one full episode under a frozen policy.
///
/// The environment is reset with `seed`; every step applies the policy's
/// allocation for the current state and logs state, action, and outcome.
pub fn run_episode(policy: &Policy, env: &mut UavEnv, seed: u64) -> Result<EpisodeTrace> {
    env.reset(seed)?;
    let mut steps = Vec::with_capacity(env.config().episode_length as usize);
    while !env.is_done() {
        let t = env.time();
        let positions: Vec<[f64; 3]> = env
            .states()
            .iter()
            .map(|s| [s.position.x, s.position.y, s.position.z])
            .collect();
        let n = env.config().num_users;
        let k = env.config().num_bs();
        let los: Vec<Vec<bool>> = (0..n).map(|i| env.los().row(i).to_vec()).collect();
        let alloc = policy.allocate(env)?;
        let watts: Vec<Vec<f64>> = (0..n).map(|i| alloc.watts().row(i).to_vec()).collect();
        debug_assert_eq!(watts.len(), n);
        debug_assert!(watts.iter().all(|row| row.len() == k));
        let out = env.step_alloc(&alloc)?;
        steps.push(StepRecord {
            t,
            positions,
            los,
            watts,
            epsilons: out.info.epsilons,
            thresholds: out.info.thresholds,
            in_zone: out.info.in_zone,
            power_fraction: out.info.power_fraction,
            user_fractions: out.info.user_power_fractions,
            reward: out.reward,
        });
    }
    Ok(EpisodeTrace {
        scenario: env.config().name.clone(),
        policy: policy.label(),
        seed,
        steps,
    })
}

/// Recompute every outage probability in a trace from its logged state and
/// action, sharing no stored intermediate with the original run.
pub fn recompute_epsilons(trace: &EpisodeTrace, scenario: &ScenarioConfig) -> Result<Vec<Vec<f64>>> {
    let mut all = Vec::with_capacity(trace.steps.len());
    for step in &trace.steps {
        let mut per_user = Vec::with_capacity(step.positions.len());
        for (i, pos) in step.positions.iter().enumerate() {
            let uav = uavpower::geometry::Position::new(pos[0], pos[1], pos[2]);
            let mut gains = Vec::with_capacity(scenario.num_bs());
            for (j, bs) in scenario.area.bs_positions.iter().enumerate() {
                let geo = link_geometry(&uav, bs)?;
                gains.push(path_gain_linear(geo.distance, step.los[i][j], &scenario.channel));
            }
            let r = user_outage(
                &step.watts[i],
                &gains,
                scenario.sensitivity,
                scenario.channel.rate_dynamic_range,
            )?;
            per_user.push(r.epsilon);
        }
        all.push(per_user);
    }
    Ok(all)
}

/// Run `episodes` deterministic evaluation episodes with seeds
/// `seed_start, seed_start + 1, ...`, writing each trace plus the figure
/// CSVs and per-zone outage CDFs into `out_dir`.
pub fn evaluate_policy(
    policy: &Policy,
    scenario: &ScenarioConfig,
    seed_start: u64,
    episodes: u32,
    out_dir: &std::path::Path,
) -> Result<Vec<EpisodeTrace>> {
    if episodes == 0 {
        return Err(Error::Validation("evaluation needs at least one episode".into()));
    }
    let mut env = UavEnv::new(scenario.clone(), seed_start)?;
    let mut traces = Vec::with_capacity(episodes as usize);
    for j in 0..u64::from(episodes) {
        let trace = run_episode(policy, &mut env, seed_start.wrapping_add(j))?;
        crate::output::write_trace(out_dir, &trace)?;
        traces.push(trace);
    }
    crate::output::write_figure_csvs(out_dir, &traces)?;
    let mut eps = Vec::new();
    let mut zones = Vec::new();
    for trace in &traces {
        for step in &trace.steps {
            eps.extend_from_slice(&step.epsilons);
            zones.extend_from_slice(&step.in_zone);
        }
    }
    let cdfs = crate::stats::zone_cdfs(&eps, &zones)?;
    if let Some(table) = &cdfs.inside {
        let path = out_dir.join(format!("cdf_{}_inside.csv", policy.label()));
        crate::output::write_cdf_csv(&path, table, true)?;
    }
    if let Some(table) = &cdfs.outside {
        let path = out_dir.join(format!("cdf_{}_outside.csv", policy.label()));
        crate::output::write_cdf_csv(&path, table, true)?;
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scaled_env(seed: u64) -> UavEnv {
        let cfg = ScenarioConfig::builtin("single_user_scaled").unwrap();
        UavEnv::new(cfg, seed).unwrap()
    }

    #[test]
    fn closest_trace_has_constant_one_sixth_power() {
        let mut env = scaled_env(7);
        let trace = run_episode(&Policy::Closest, &mut env, 7).unwrap();
        assert_eq!(trace.steps.len(), env.config().episode_length as usize);
        for step in &trace.steps {
            assert_eq!(step.power_fraction, 1.0 / 6.0);
            assert_eq!(step.user_fractions, vec![1.0 / 6.0]);
        }
    }

    #[test]
    fn full_power_trace_has_constant_unit_power() {
        let mut env = scaled_env(3);
        let trace = run_episode(&Policy::FullPower, &mut env, 3).unwrap();
        for step in &trace.steps {
            assert_eq!(step.power_fraction, 1.0);
        }
    }

    #[test]
    fn same_seed_gives_identical_traces() {
        let mut env = scaled_env(11);
        let a = run_episode(&Policy::Closest, &mut env, 11).unwrap();
        let b = run_episode(&Policy::Closest, &mut env, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sac_traces_are_deterministic_too() {
        let cfg = ScenarioConfig::builtin("single_user_scaled").unwrap();
        let params = SacParams {
            hidden: vec![8],
            batch_size: 4,
            replay_capacity: 64,
            warmup_steps: 0,
            seed: 5,
            ..SacParams::default()
        };
        let agent = SacAgent::new(
            cfg.observation_dim(),
            cfg.action_dim(),
            params,
        )
        .unwrap();
        let policy = Policy::Sac(Box::new(agent));
        let mut env = UavEnv::new(cfg, 0).unwrap();
        let a = run_episode(&policy, &mut env, 19).unwrap();
        let b = run_episode(&policy, &mut env, 19).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.policy, "SAC");
    }

    #[test]
    fn logged_epsilons_recompute_exactly() {
        let cfg = ScenarioConfig::builtin("single_user_scaled").unwrap();
        let mut env = UavEnv::new(cfg.clone(), 0).unwrap();
        for policy in [Policy::Closest, Policy::FullPower] {
            let trace = run_episode(&policy, &mut env, 23).unwrap();
            let recomputed = recompute_epsilons(&trace, &cfg).unwrap();
            for (step, re) in trace.steps.iter().zip(&recomputed) {
                for (logged, fresh) in step.epsilons.iter().zip(re) {
                    let denom = logged.abs().max(1e-300);
                    assert!(
                        ((logged - fresh) / denom).abs() < 1e-12,
                        "t={}: logged {logged} recomputed {fresh}",
                        step.t
                    );
                }
            }
        }
    }

    #[test]
    fn trace_round_trips_through_json() {
        let mut env = scaled_env(2);
        let trace = run_episode(&Policy::Closest, &mut env, 2).unwrap();
        let text = serde_json::to_string(&trace).unwrap();
        let back: EpisodeTrace = serde_json::from_str(&text).unwrap();
        assert_eq!(trace, back);
    }

    #[test]
    fn run_config_defaults_and_validation() {
        let cfg = RunConfig::from_json(
            r#"{"scenario": "single_user_scaled", "agent": "sac", "budget": 1000, "seed": 9}"#,
        )
        .unwrap();
        assert_eq!(cfg.agent, AgentKind::Sac);
        assert_eq!(cfg.eval_episodes, 50);
        assert_eq!(cfg.sac_params().seed, 9);

        assert!(RunConfig::from_json(r#"{"scenario": "no_such", "agent": "sac"}"#).is_err());
        assert!(RunConfig::from_json(r#"{"scenario": "single_user", "agent": "dqn"}"#).is_err());
    }

    #[test]
    fn agent_kind_labels_round_trip() {
        for kind in [AgentKind::Sac, AgentKind::FullPower, AgentKind::Closest] {
            assert_eq!(AgentKind::parse(kind.label()).unwrap(), kind);
        }
    }
}
