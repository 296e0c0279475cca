//! The sequential decision process tying geometry, channel, and outage
//! together: scenario configuration, state evolution, observation
//! construction, reward, and episode semantics.
//!
//! One step of the loop, in order: (1) per-user outage from the *current*
//! gains and the proposed allocation; (2) per-user reliability threshold from
//! the *current* position (membership is evaluated before movement); (3)
//! reward; (4) mobility advance; (5) LoS re-sampling and gain refresh; (6)
//! time advance and termination check. Outage is always computed from the
//! analytic distribution, never sampled, so the reward reflects the true
//! outage probability of the chosen allocation.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams};
use crate::geometry::{
    gauss_markov_step, link_geometry, AreaConfig, CriticalZone, DeterministicPath,
    GaussMarkovParams, MobilityState, Position,
};
use crate::grid::Grid;
use crate::outage;
use crate::{Error, Result};

/// Outage probability the Closest baseline attains at the area centre after
/// calibration; see [`calibrate_sensitivity`].
pub const CALIBRATION_TARGET: f64 = 1e-3;

/// Receiver sensitivity of the built-in single-user scenarios (watts),
/// frozen from [`calibrate_sensitivity`] on their geometry.
pub const SINGLE_USER_SENSITIVITY: f64 = 1.2303236619895824e-17;

/// Base-station sites of the single-user scenario (metres), clustered in the
/// bottom-left quadrant of the 1.5 km square.
pub const SINGLE_USER_BS_SITES: [(f64, f64); 6] = [
    (50.0, 150.0),
    (60.0, 305.0),
    (150.0, 275.0),
    (210.0, 50.0),
    (310.0, 135.0),
    (360.0, 200.0),
];

/// An N x K transmit-power matrix with every entry inside `[0, p_max]`.
///
/// Construction validates the box constraint; the interior is immutable
/// afterwards, so a held value is always feasible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    watts: Grid<f64>,
    p_max: f64,
}

impl PowerAllocation {
    pub fn new(watts: Grid<f64>, p_max: f64) -> Result<Self> {
        if !(p_max.is_finite() && p_max > 0.0) {
            return Err(Error::Validation(format!(
                "p_max must be positive, got {p_max}"
            )));
        }
        for (idx, &w) in watts.as_slice().iter().enumerate() {
            if !w.is_finite() || w < 0.0 || w > p_max {
                return Err(Error::Validation(format!(
                    "power entry {idx} = {w} outside [0, {p_max}]"
                )));
            }
        }
        Ok(PowerAllocation { watts, p_max })
    }

    /// Every link at full power.
    pub fn full(num_users: usize, num_bs: usize, p_max: f64) -> Result<Self> {
        Self::new(Grid::filled(num_users, num_bs, p_max), p_max)
    }

    /// Every link silent.
    pub fn zeros(num_users: usize, num_bs: usize, p_max: f64) -> Result<Self> {
        Self::new(Grid::filled(num_users, num_bs, 0.0), p_max)
    }

    pub fn watts(&self) -> &Grid<f64> {
        &self.watts
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn num_users(&self) -> usize {
        self.watts.rows()
    }

    pub fn num_bs(&self) -> usize {
        self.watts.cols()
    }

    /// Total allocated power as a fraction of `N * K * p_max`; in `[0, 1]`.
    ///
    /// Each entry is normalized by `p_max` before summing, so saturated and
    /// silent links contribute exactly 1 and 0 and the canonical baselines
    /// land on exact fractions (1 for full power, `1/K` per user for
    /// single-station service).
    pub fn total_fraction(&self) -> f64 {
        let total: f64 = self.watts.as_slice().iter().map(|w| w / self.p_max).sum();
        total / (self.watts.rows() as f64 * self.watts.cols() as f64)
    }

    /// User `i`'s allocated power as a fraction of `K * p_max`; in `[0, 1]`.
    pub fn user_fraction(&self, i: usize) -> f64 {
        let row: f64 = self.watts.row(i).iter().map(|w| w / self.p_max).sum();
        row / self.watts.cols() as f64
    }
}

/// The reliability requirement: a stricter outage target inside the critical
/// zone than outside it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityMap {
    pub zone: CriticalZone,
    /// Outage target outside the critical zone.
    pub eps_outside: f64,
    /// Outage target inside the critical zone; strictly tighter.
    pub eps_inside: f64,
}

impl ReliabilityMap {
    pub fn validate(&self) -> Result<()> {
        self.zone.validate()?;
        let ok = self.eps_inside > 0.0
            && self.eps_inside < self.eps_outside
            && self.eps_outside <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "need 0 < eps_inside < eps_outside <= 1, got inside {} outside {}",
                self.eps_inside, self.eps_outside
            )))
        }
    }

    pub fn in_zone(&self, p: &Position) -> bool {
        self.zone.contains(p)
    }

    /// The outage target that applies at position `p`.
    pub fn threshold_at(&self, p: &Position) -> f64 {
        if self.in_zone(p) {
            self.eps_inside
        } else {
            self.eps_outside
        }
    }
}

/// How the UAVs move between slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MobilityModel {
    /// Straight-line traversal; single-user scenarios.
    Path(DeterministicPath),
    /// Gauss-Markov wandering with boundary reflection.
    GaussMarkov(GaussMarkovParams),
}

/// A complete, resolved scenario description.
///
/// The JSON interface ([`ScenarioConfig::from_json`]) additionally accepts
/// base stations given as `bs_count` + `bs_seed` (uniformly placed) and an
/// omitted `sensitivity` (calibrated via [`calibrate_sensitivity`]); the
/// resolved form always carries explicit positions and a concrete value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub area: AreaConfig,
    pub num_users: usize,
    pub mobility: MobilityModel,
    pub channel: ChannelParams,
    pub reliability: ReliabilityMap,
    /// Per-link transmit power ceiling (watts).
    pub p_max: f64,
    /// Receiver sensitivity threshold (watts).
    pub sensitivity: f64,
    /// Steps per episode.
    pub episode_length: u32,
    /// Append per-user in-zone flags to the observation (default true).
    pub observe_zone_flag: bool,
    /// Normalize the reward's power term by `K * p_max` instead of
    /// `N * K * p_max` (default false; exact only for N = 1).
    pub per_user_budget_norm: bool,
}

impl ScenarioConfig {
    /// Names accepted by [`ScenarioConfig::builtin`].
    pub fn builtin_names() -> &'static [&'static str] {
        &["single_user", "single_user_scaled", "multi_user"]
    }

    /// Returns a named built-in scenario.
    pub fn builtin(name: &str) -> Result<ScenarioConfig> {
        let cfg = match name {
            "single_user" => Self::single_user(1500),
            "single_user_scaled" => Self::single_user(300),
            "multi_user" => Self::multi_user(),
            other => {
                return Err(Error::Validation(format!(
                    "unknown scenario '{other}'; built-ins: {}",
                    Self::builtin_names().join(", ")
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The 1.5 km diagonal-crossing scenario: one UAV, six base stations in
    /// the bottom-left quadrant, critical zone [750, 1000]^2 m crossed during
    /// slots [n/2, 2n/3].
    fn single_user(n_slots: u32) -> ScenarioConfig {
        ScenarioConfig {
            name: if n_slots == 1500 {
                "single_user".into()
            } else {
                "single_user_scaled".into()
            },
            area: AreaConfig::new(1500.0, 1500.0, &SINGLE_USER_BS_SITES, 25.0, 100.0),
            num_users: 1,
            mobility: MobilityModel::Path(DeterministicPath {
                start: Position::new(0.0, 0.0, 100.0),
                end: Position::new(1500.0, 1500.0, 100.0),
                n_slots,
            }),
            channel: ChannelParams::default(),
            reliability: ReliabilityMap {
                zone: CriticalZone {
                    x_min: 750.0,
                    x_max: 1000.0,
                    y_min: 750.0,
                    y_max: 1000.0,
                },
                eps_outside: 1e-2,
                eps_inside: 1e-7,
            },
            p_max: 1.0,
            sensitivity: SINGLE_USER_SENSITIVITY,
            episode_length: n_slots,
            observe_zone_flag: true,
            per_user_budget_norm: false,
        }
    }

    /// Three UAVs wandering over a 3 km square served by 19 uniformly placed
    /// base stations.
    fn multi_user() -> ScenarioConfig {
        let sites = sample_bs_sites(19, 3000.0, 3000.0, 20);
        let area = AreaConfig::new(3000.0, 3000.0, &sites, 25.0, 100.0);
        let channel = ChannelParams::default();
        let sensitivity = calibrate_sensitivity(&area, &channel, 1.0);
        ScenarioConfig {
            name: "multi_user".into(),
            area,
            num_users: 3,
            mobility: MobilityModel::GaussMarkov(GaussMarkovParams::default()),
            channel,
            reliability: ReliabilityMap {
                zone: CriticalZone {
                    x_min: 1125.0,
                    x_max: 1875.0,
                    y_min: 1125.0,
                    y_max: 1875.0,
                },
                eps_outside: 1e-2,
                eps_inside: 1e-4,
            },
            p_max: 1.0,
            sensitivity,
            episode_length: 500,
            observe_zone_flag: true,
            per_user_budget_norm: false,
        }
    }

    pub fn num_bs(&self) -> usize {
        self.area.num_bs()
    }

    /// Length of the observation vector: `2N + N*K (+ N)`.
    pub fn observation_dim(&self) -> usize {
        let n = self.num_users;
        let base = 2 * n + n * self.num_bs();
        if self.observe_zone_flag {
            base + n
        } else {
            base
        }
    }

    /// Length of the raw action vector: `N*K`.
    pub fn action_dim(&self) -> usize {
        self.num_users * self.num_bs()
    }

    pub fn validate(&self) -> Result<()> {
        self.area.validate()?;
        self.channel.validate()?;
        self.reliability.validate()?;
        if self.num_users == 0 {
            return Err(Error::Validation("num_users must be at least 1".into()));
        }
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(Error::Validation(format!(
                "p_max must be positive, got {}",
                self.p_max
            )));
        }
        if !(self.sensitivity.is_finite() && self.sensitivity > 0.0) {
            return Err(Error::Validation(format!(
                "sensitivity must be positive, got {}",
                self.sensitivity
            )));
        }
        if self.episode_length == 0 {
            return Err(Error::Validation("episode_length must be at least 1".into()));
        }
        let zone = &self.reliability.zone;
        if zone.x_max > self.area.width || zone.y_max > self.area.height {
            return Err(Error::Validation(
                "critical zone extends outside the area".into(),
            ));
        }
        match &self.mobility {
            MobilityModel::Path(path) => {
                path.validate()?;
                if self.num_users != 1 {
                    return Err(Error::Validation(
                        "deterministic-path mobility supports exactly one user".into(),
                    ));
                }
                if path.start.z != self.area.uav_height {
                    return Err(Error::Validation(format!(
                        "path altitude {} differs from uav_height {}",
                        path.start.z, self.area.uav_height
                    )));
                }
                for p in [&path.start, &path.end] {
                    if !self.area.contains_xy(p.x, p.y) {
                        return Err(Error::Validation(format!(
                            "path endpoint ({}, {}) outside the area",
                            p.x, p.y
                        )));
                    }
                }
                if self.episode_length > path.n_slots {
                    return Err(Error::Validation(format!(
                        "episode_length {} exceeds the path's {} slots",
                        self.episode_length, path.n_slots
                    )));
                }
            }
            MobilityModel::GaussMarkov(params) => params.validate()?,
        }
        Ok(())
    }

    /// Parses a scenario from JSON, resolving seeded base-station placement
    /// and calibrating the sensitivity when it is omitted.
    pub fn from_json(text: &str) -> Result<ScenarioConfig> {
        let raw: RawScenario = serde_json::from_str(text)
            .map_err(|e| Error::Validation(format!("scenario JSON: {e}")))?;
        let sites = match (raw.area.bs_positions, raw.area.bs_count) {
            (Some(sites), None) => sites.iter().map(SiteSpec::xy).collect(),
            (None, Some(count)) => {
                sample_bs_sites(count, raw.area.width, raw.area.height, raw.area.bs_seed)
            }
            (Some(_), Some(_)) => {
                return Err(Error::Validation(
                    "area: give bs_positions or bs_count, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Validation(
                    "area: either bs_positions or bs_count is required".into(),
                ))
            }
        };
        let area = AreaConfig::new(
            raw.area.width,
            raw.area.height,
            &sites,
            raw.area.bs_height,
            raw.area.uav_height,
        );
        area.validate()?;
        let sensitivity = match raw.sensitivity {
            Some(s) => s,
            None => calibrate_sensitivity(&area, &raw.channel, raw.p_max),
        };
        let cfg = ScenarioConfig {
            name: raw.name,
            area,
            num_users: raw.num_users,
            mobility: raw.mobility,
            channel: raw.channel,
            reliability: raw.reliability,
            p_max: raw.p_max,
            sensitivity,
            episode_length: raw.episode_length,
            observe_zone_flag: raw.observe_zone_flag,
            per_user_budget_norm: raw.per_user_budget_norm,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// JSON surface of [`ScenarioConfig`] before resolution.
#[derive(Deserialize)]
struct RawScenario {
    #[serde(default = "default_name")]
    name: String,
    area: RawArea,
    #[serde(default = "default_one")]
    num_users: usize,
    mobility: MobilityModel,
    #[serde(default)]
    channel: ChannelParams,
    reliability: ReliabilityMap,
    #[serde(default = "default_p_max")]
    p_max: f64,
    #[serde(default)]
    sensitivity: Option<f64>,
    episode_length: u32,
    #[serde(default = "default_true")]
    observe_zone_flag: bool,
    #[serde(default)]
    per_user_budget_norm: bool,
}

/// One base-station site in JSON: either an `[x, y]` pair or a full
/// position object (whose `z` is ignored in favour of `bs_height`).
#[derive(Deserialize)]
#[serde(untagged)]
enum SiteSpec {
    Pair((f64, f64)),
    Full(Position),
}

impl SiteSpec {
    fn xy(&self) -> (f64, f64) {
        match self {
            SiteSpec::Pair(p) => *p,
            SiteSpec::Full(p) => (p.x, p.y),
        }
    }
}

#[derive(Deserialize)]
struct RawArea {
    width: f64,
    height: f64,
    #[serde(default)]
    bs_positions: Option<Vec<SiteSpec>>,
    #[serde(default)]
    bs_count: Option<usize>,
    #[serde(default)]
    bs_seed: u64,
    #[serde(default = "default_bs_height")]
    bs_height: f64,
    #[serde(default = "default_uav_height")]
    uav_height: f64,
}

fn default_name() -> String {
    "custom".into()
}
fn default_one() -> usize {
    1
}
fn default_p_max() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_bs_height() -> f64 {
    25.0
}
fn default_uav_height() -> f64 {
    100.0
}

/// Uniformly places `count` base-station sites over the rectangle, from a
/// dedicated seeded stream (x then y per site).
pub fn sample_bs_sites(count: usize, width: f64, height: f64, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (rng.gen::<f64>() * width, rng.gen::<f64>() * height))
        .collect()
}

/// Receiver sensitivity such that the Closest baseline at the area centre
/// attains outage [`CALIBRATION_TARGET`] under the static all-NLoS
/// convention: `s = -p_max * g * ln(1 - target)` with `g` the NLoS gain of
/// the base station nearest the centre.
pub fn calibrate_sensitivity(area: &AreaConfig, channel: &ChannelParams, p_max: f64) -> f64 {
    let center = Position::new(area.width / 2.0, area.height / 2.0, area.uav_height);
    let d_min = area
        .bs_positions
        .iter()
        .map(|bs| center.distance(bs))
        .fold(f64::INFINITY, f64::min);
    let gain = channel::path_gain_linear(d_min, false, channel);
    -p_max * gain * (-CALIBRATION_TARGET).ln_1p()
}

/// Flat observation vector: per-user normalized (x, y), then the LoS matrix
/// row-major as 0/1 flags, then (if configured) per-user in-zone flags.
/// Every entry lies in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-step measurement record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Per-user outage probability of the applied allocation.
    pub epsilons: Vec<f64>,
    /// Per-user outage target in force this step.
    pub thresholds: Vec<f64>,
    /// Per-user critical-zone membership this step.
    pub in_zone: Vec<bool>,
    /// Number of users with `epsilon > threshold`.
    pub violations: usize,
    /// Total allocated power over `N * K * p_max`.
    pub power_fraction: f64,
    /// Per-user allocated power over `K * p_max`.
    pub user_power_fractions: Vec<f64>,
}

/// Result of one environment step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Observation of the post-step state.
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Reward: unused-power fraction minus violating-user fraction,
/// `r = (1 - sum P / (N K p_max)) - (1/N) sum 1(eps_i > tau_i)`.
///
/// With `per_user_budget_norm` the power term divides by `K p_max` instead —
/// identical for one user, unbounded below for several. Under the default
/// normalization the reward lies in `[-1, 1]`.
pub fn compute_reward(
    alloc: &PowerAllocation,
    epsilons: &[f64],
    thresholds: &[f64],
    per_user_budget_norm: bool,
) -> Result<f64> {
    let n = alloc.num_users();
    if epsilons.len() != n || thresholds.len() != n {
        return Err(Error::Validation(format!(
            "reward inputs disagree: {n} users, {} epsilons, {} thresholds",
            epsilons.len(),
            thresholds.len()
        )));
    }
    let power_term = if per_user_budget_norm {
        1.0 - alloc.total_fraction() * n as f64
    } else {
        1.0 - alloc.total_fraction()
    };
    let violating = epsilons
        .iter()
        .zip(thresholds)
        .filter(|&(e, t)| e > t)
        .count();
    Ok(power_term - violating as f64 / n as f64)
}

static ACTION_CLIPS: AtomicU64 = AtomicU64::new(0);

/// Number of raw action entries clipped into `[-1, 1]` so far, process-wide.
pub fn action_clip_count() -> u64 {
    ACTION_CLIPS.load(Ordering::Relaxed)
}

/// The environment: scenario, per-user mobility, LoS states, cached gains,
/// and the episode clock. Single-writer; clone-free.
pub struct UavEnv {
    config: ScenarioConfig,
    rng: ChaCha12Rng,
    t: u32,
    done: bool,
    states: Vec<MobilityState>,
    los: Grid<bool>,
    gains: Grid<f64>,
}

impl UavEnv {
    /// Builds the environment and runs the first reset with `seed`.
    pub fn new(config: ScenarioConfig, seed: u64) -> Result<UavEnv> {
        config.validate()?;
        let n = config.num_users;
        let k = config.num_bs();
        let mut env = UavEnv {
            config,
            rng: ChaCha12Rng::seed_from_u64(seed),
            t: 0,
            done: false,
            states: Vec::new(),
            los: Grid::filled(n, k, false),
            gains: Grid::filled(n, k, 0.0),
        };
        env.reset(seed)?;
        Ok(env)
    }

    /// Restarts the episode from a fresh seeded stream: UAVs at the path
    /// start (deterministic) or uniformly random positions (stochastic),
    /// LoS drawn from the stationary distribution of the initial geometry.
    ///
    /// Draw order: per user x then y (stochastic only), then the LoS matrix
    /// row-major.
    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.rng = ChaCha12Rng::seed_from_u64(seed);
        self.t = 0;
        self.done = false;
        self.states = match &self.config.mobility {
            MobilityModel::Path(path) => {
                let (vx, vy) = path.slot_velocity();
                vec![MobilityState {
                    position: path.position_at(0)?,
                    vx,
                    vy,
                }]
            }
            MobilityModel::GaussMarkov(params) => (0..self.config.num_users)
                .map(|_| {
                    let x = self.rng.gen::<f64>() * self.config.area.width;
                    let y = self.rng.gen::<f64>() * self.config.area.height;
                    MobilityState {
                        position: Position::new(x, y, self.config.area.uav_height),
                        vx: params.mean_vx,
                        vy: params.mean_vy,
                    }
                })
                .collect(),
        };
        let (dist, stationary) = self.link_tables()?;
        self.los = channel::sample_los(None, &stationary, &self.config.channel, &mut self.rng);
        self.gains = self.gains_from(&dist);
        Ok(self.observation())
    }

    /// 3D distances and stationary LoS probabilities of the current geometry.
    fn link_tables(&self) -> Result<(Grid<f64>, Grid<f64>)> {
        let n = self.config.num_users;
        let k = self.config.num_bs();
        let mut dist = Vec::with_capacity(n * k);
        let mut stat = Vec::with_capacity(n * k);
        for state in &self.states {
            for bs in &self.config.area.bs_positions {
                let geo = link_geometry(&state.position, bs)?;
                dist.push(geo.distance);
                stat.push(channel::los_probability(
                    geo.elevation_deg,
                    &self.config.channel,
                ));
            }
        }
        Ok((Grid::from_vec(n, k, dist), Grid::from_vec(n, k, stat)))
    }

    /// Linear gains for the held LoS flags at the given distances.
    fn gains_from(&self, dist: &Grid<f64>) -> Grid<f64> {
        let n = self.config.num_users;
        let k = self.config.num_bs();
        let mut g = Vec::with_capacity(n * k);
        for i in 0..n {
            for j in 0..k {
                g.push(channel::path_gain_linear(
                    dist[(i, j)],
                    self.los[(i, j)],
                    &self.config.channel,
                ));
            }
        }
        Grid::from_vec(n, k, g)
    }

    /// Maps a raw agent output in `[-1, 1]^{N*K}` to a feasible allocation,
    /// `p = (raw + 1)/2 * p_max` per entry. Out-of-range entries are clipped
    /// (counted in [`action_clip_count`]); NaN is a hard error — a NaN
    /// emitted by a learner is a bug to surface, not mask.
    pub fn action_decode(&self, raw: &[f64]) -> Result<PowerAllocation> {
        let want = self.config.action_dim();
        if raw.len() != want {
            return Err(Error::Validation(format!(
                "action length {} != N*K = {want}",
                raw.len()
            )));
        }
        let p_max = self.config.p_max;
        let mut watts = Vec::with_capacity(raw.len());
        for &v in raw {
            if v.is_nan() {
                return Err(Error::Numeric("NaN in action".into()));
            }
            let c = v.clamp(-1.0, 1.0);
            if c != v {
                ACTION_CLIPS.fetch_add(1, Ordering::Relaxed);
            }
            watts.push((c + 1.0) / 2.0 * p_max);
        }
        PowerAllocation::new(
            Grid::from_vec(self.config.num_users, self.config.num_bs(), watts),
            p_max,
        )
    }

    /// Decodes `raw` and applies it; see [`UavEnv::step_alloc`].
    pub fn step_raw(&mut self, raw: &[f64]) -> Result<StepOutcome> {
        let alloc = self.action_decode(raw)?;
        self.step_alloc(&alloc)
    }

    /// Applies one allocation for one slot.
    ///
    /// Outage and thresholds are evaluated against the pre-move state; the
    /// returned observation describes the post-move state. Stepping a
    /// finished episode is an error.
    pub fn step_alloc(&mut self, alloc: &PowerAllocation) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Validation(
                "episode finished; reset before stepping again".into(),
            ));
        }
        let n = self.config.num_users;
        let k = self.config.num_bs();
        if alloc.num_users() != n || alloc.num_bs() != k {
            return Err(Error::Validation(format!(
                "allocation {}x{} does not match scenario {n}x{k}",
                alloc.num_users(),
                alloc.num_bs()
            )));
        }
        if alloc.p_max() != self.config.p_max {
            return Err(Error::Validation(format!(
                "allocation p_max {} does not match scenario p_max {}",
                alloc.p_max(),
                self.config.p_max
            )));
        }

        let mut epsilons = Vec::with_capacity(n);
        for i in 0..n {
            let r = outage::user_outage(
                alloc.watts().row(i),
                self.gains.row(i),
                self.config.sensitivity,
                self.config.channel.rate_dynamic_range,
            )?;
            epsilons.push(r.epsilon);
        }
        let in_zone: Vec<bool> = self
            .states
            .iter()
            .map(|s| self.config.reliability.in_zone(&s.position))
            .collect();
        let thresholds: Vec<f64> = self
            .states
            .iter()
            .map(|s| self.config.reliability.threshold_at(&s.position))
            .collect();
        let violations = epsilons
            .iter()
            .zip(&thresholds)
            .filter(|&(e, t)| e > t)
            .count();
        let reward = compute_reward(alloc, &epsilons, &thresholds, self.config.per_user_budget_norm)?;

        // Advance the world: movement first, then the LoS chain against the
        // stationary distribution of the new geometry, then fresh gains.
        match &self.config.mobility {
            MobilityModel::Path(path) => {
                self.states[0].position = path.position_at(self.t + 1)?;
            }
            MobilityModel::GaussMarkov(params) => {
                for s in &mut self.states {
                    *s = gauss_markov_step(s, params, &self.config.area, &mut self.rng);
                }
            }
        }
        let (dist, stationary) = self.link_tables()?;
        self.los = channel::sample_los(
            Some(&self.los.clone()),
            &stationary,
            &self.config.channel,
            &mut self.rng,
        );
        self.gains = self.gains_from(&dist);
        self.t += 1;
        self.done = self.t >= self.config.episode_length;

        let user_power_fractions = (0..n).map(|i| alloc.user_fraction(i)).collect();
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            done: self.done,
            info: StepInfo {
                epsilons,
                thresholds,
                in_zone,
                violations,
                power_fraction: alloc.total_fraction(),
                user_power_fractions,
            },
        })
    }

    /// Observation of the current state.
    pub fn observation(&self) -> Observation {
        let mut v = Vec::with_capacity(self.config.observation_dim());
        for s in &self.states {
            v.push(s.position.x / self.config.area.width);
            v.push(s.position.y / self.config.area.height);
        }
        for &los in self.los.as_slice() {
            v.push(if los { 1.0 } else { 0.0 });
        }
        if self.config.observe_zone_flag {
            for s in &self.states {
                v.push(if self.config.reliability.in_zone(&s.position) {
                    1.0
                } else {
                    0.0
                });
            }
        }
        Observation(v)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn time(&self) -> u32 {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Per-user mobility states (position + velocity).
    pub fn states(&self) -> &[MobilityState] {
        &self.states
    }

    /// Current LoS flags, users x base stations.
    pub fn los(&self) -> &Grid<bool> {
        &self.los
    }

    /// Current linear gains, users x base stations. The outage of an
    /// allocation `P` this step is `user_outage(P_i, gains_i, ...)` per user.
    pub fn gains(&self) -> &Grid<f64> {
        &self.gains
    }
}
