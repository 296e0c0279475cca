//! Air-to-ground channel model: LoS probability, log-distance path loss with
//! distinct LoS/NLoS exponents, a two-state LoS persistence process, and the
//! exponential-rate parameters that feed the outage analytics.
//!
//! Fading on each link is Rayleigh, so the received power of link `(i, k)` is
//! exponentially distributed with mean `p * g` (transmit power times average
//! channel gain). The outage analytics work with the corresponding exponential
//! *rates* `1 / (p * g)`; [`link_rates`] produces them, enforcing the
//! distinctness and dynamic-range conditioning the closed form needs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Relative separation below which two rates count as tied and get jittered.
pub const RATE_TIE_TOLERANCE: f64 = 1e-9;
/// Per-rank relative nudge applied to break rate ties.
const RATE_JITTER: f64 = 1e-6;

/// Channel parameters: sigmoid LoS model, dual log-distance path loss, LoS
/// persistence, and the rate dynamic-range cap.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelParams {
    /// Environment constant `a` of the sigmoid LoS model.
    pub los_a: f64,
    /// Environment constant `b` of the sigmoid LoS model (per degree).
    pub los_b: f64,
    /// LoS path loss at the reference distance (dB).
    pub pl0_los_db: f64,
    /// NLoS path loss at the reference distance (dB).
    pub pl0_nlos_db: f64,
    /// LoS path-loss exponent.
    pub n_los: f64,
    /// NLoS path-loss exponent.
    pub n_nlos: f64,
    /// Reference distance (metres).
    pub d0: f64,
    /// Combined antenna gain (dB).
    pub antenna_gain_db: f64,
    /// Probability that a link keeps its LoS state from one slot to the next.
    pub los_persistence: f64,
    /// Largest allowed ratio between the fastest and slowest active rate of a
    /// user; faster rates are clamped down to this ratio.
    pub rate_dynamic_range: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            los_a: 9.61,
            los_b: 0.16,
            pl0_los_db: 30.0,
            pl0_nlos_db: 40.0,
            n_los: 2.2,
            n_nlos: 3.5,
            d0: 1.0,
            antenna_gain_db: 0.0,
            los_persistence: 0.9,
            rate_dynamic_range: 1e12,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.los_a.is_finite() && self.los_a > 0.0) {
            return Err(Error::Validation(format!("los_a must be positive, got {}", self.los_a)));
        }
        if !(self.los_b.is_finite() && self.los_b >= 0.0) {
            return Err(Error::Validation(format!(
                "los_b must be non-negative, got {}",
                self.los_b
            )));
        }
        if !(self.d0.is_finite() && self.d0 > 0.0) {
            return Err(Error::Validation(format!("d0 must be positive, got {}", self.d0)));
        }
        if !(self.n_los.is_finite() && self.n_los > 0.0) || !self.n_nlos.is_finite() {
            return Err(Error::Validation("path-loss exponents must be positive".into()));
        }
        if self.n_nlos < self.n_los {
            return Err(Error::Validation(format!(
                "NLoS exponent {} must be at least the LoS exponent {}",
                self.n_nlos, self.n_los
            )));
        }
        if self.pl0_nlos_db < self.pl0_los_db {
            return Err(Error::Validation(format!(
                "NLoS reference loss {} dB must be at least the LoS one {} dB",
                self.pl0_nlos_db, self.pl0_los_db
            )));
        }
        if !(self.los_persistence >= 0.0 && self.los_persistence <= 1.0) {
            return Err(Error::Validation(format!(
                "los_persistence must lie in [0, 1], got {}",
                self.los_persistence
            )));
        }
        if !(self.rate_dynamic_range.is_finite() && self.rate_dynamic_range >= 1.0) {
            return Err(Error::Validation(format!(
                "rate_dynamic_range must be at least 1, got {}",
                self.rate_dynamic_range
            )));
        }
        Ok(())
    }
}

/// Sigmoid line-of-sight probability as a function of elevation angle.
///
/// `p = 1 / (1 + a * exp(-b * (theta - a)))`, with `theta` in degrees clamped
/// to `[0, 90]`. Monotone non-decreasing in the elevation for `b >= 0`.
pub fn los_probability(elevation_deg: f64, params: &ChannelParams) -> f64 {
    let theta = elevation_deg.clamp(0.0, 90.0);
    1.0 / (1.0 + params.los_a * (-params.los_b * (theta - params.los_a)).exp())
}

/// Average linear channel gain of a link at the given distance and LoS state.
///
/// Log-distance path loss `PL = PL0 + 10 n log10(d / d0)` with the LoS or NLoS
/// constants, minus the antenna gain, converted out of dB. Distances below the
/// reference distance are clamped to it.
pub fn path_gain_linear(distance: f64, los: bool, params: &ChannelParams) -> f64 {
    let d = distance.max(params.d0);
    let (pl0, n) = if los {
        (params.pl0_los_db, params.n_los)
    } else {
        (params.pl0_nlos_db, params.n_nlos)
    };
    let pl_db = pl0 + 10.0 * n * (d / params.d0).log10();
    10f64.powf(-(pl_db - params.antenna_gain_db) / 10.0)
}

/// Advances the per-link LoS states by one slot.
///
/// Each link keeps its previous state with probability `los_persistence` and
/// otherwise redraws from its stationary probability, so the marginal
/// distribution of every link stays at `stationary`. With `prev == None`
/// (start of an episode) every link draws from the stationary distribution.
/// Entries are processed row-major, one or two uniform draws per link.
pub fn sample_los<R: Rng + ?Sized>(
    prev: Option<&Grid<bool>>,
    stationary: &Grid<f64>,
    params: &ChannelParams,
    rng: &mut R,
) -> Grid<bool> {
    let (n, k) = (stationary.rows(), stationary.cols());
    let mut flags = Vec::with_capacity(n * k);
    for i in 0..n {
        for j in 0..k {
            let fresh = match prev {
                Some(p) if rng.gen::<f64>() < params.los_persistence => {
                    flags.push(p[(i, j)]);
                    continue;
                }
                _ => rng.gen::<f64>() < stationary[(i, j)],
            };
            flags.push(fresh);
        }
    }
    Grid::from_vec(n, k, flags)
}

/// Exponential rate parameters for every (user, base station) link.
///
/// A link is active exactly when its transmit power is positive; inactive
/// links carry rate 0. Within each user's active set the rates are pairwise
/// distinct with relative separation at least [`RATE_TIE_TOLERANCE`], and the
/// ratio of the largest to the smallest active rate never exceeds the
/// configured dynamic range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkRates {
    rates: Grid<f64>,
}

impl LinkRates {
    pub fn num_users(&self) -> usize {
        self.rates.rows()
    }

    pub fn num_bs(&self) -> usize {
        self.rates.cols()
    }

    /// Full rate row of user `i`, zeros marking inactive links.
    pub fn user_rates(&self, i: usize) -> &[f64] {
        self.rates.row(i)
    }

    /// Rates of user `i`'s active links, in link order.
    pub fn active_rates(&self, i: usize) -> Vec<f64> {
        self.rates.row(i).iter().copied().filter(|&r| r > 0.0).collect()
    }
}

/// Converts a power allocation and gain table into per-link exponential rates.
///
/// `rate = 1 / (power * gain)` for active links. Two conditioning passes run
/// per user row before the rates are returned:
///
/// 1. rates above `min_rate * rate_dynamic_range` (including infinities from
///    underflowing `power * gain`) are clamped down to that cap, which keeps
///    the closed-form outage evaluable without dropping the link;
/// 2. rates tied within [`RATE_TIE_TOLERANCE`] are separated by multiplying
///    the later (in ascending rate order) by `1 + 1e-6 * rank`, a
///    deterministic jitter that preserves the outage to well under any
///    tolerance used downstream.
pub fn link_rates(powers: &Grid<f64>, gains: &Grid<f64>, params: &ChannelParams) -> Result<LinkRates> {
    if powers.rows() != gains.rows() || powers.cols() != gains.cols() {
        return Err(Error::Validation(format!(
            "power table {}x{} does not match gain table {}x{}",
            powers.rows(),
            powers.cols(),
            gains.rows(),
            gains.cols()
        )));
    }
    let (n, k) = (powers.rows(), powers.cols());
    let mut data = Vec::with_capacity(n * k);
    for i in 0..n {
        let row = row_rates(powers.row(i), gains.row(i), params.rate_dynamic_range)?;
        data.extend_from_slice(&row);
    }
    Ok(LinkRates {
        rates: Grid::from_vec(n, k, data),
    })
}

/// Rate construction for a single user row; see [`link_rates`].
pub(crate) fn row_rates(powers: &[f64], gains: &[f64], dynamic_range: f64) -> Result<Vec<f64>> {
    if powers.len() != gains.len() {
        return Err(Error::Validation(format!(
            "power row length {} does not match gain row length {}",
            powers.len(),
            gains.len()
        )));
    }
    for (idx, &p) in powers.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::Validation(format!(
                "transmit power must be finite and non-negative, got {p} at link {idx}"
            )));
        }
    }
    for (idx, &g) in gains.iter().enumerate() {
        if !g.is_finite() || g <= 0.0 {
            return Err(Error::Validation(format!(
                "channel gain must be finite and positive, got {g} at link {idx}"
            )));
        }
    }

    let mut row = vec![0.0; powers.len()];
    // (rate, column) pairs for active links; rate may be +inf on underflow of
    // power * gain, which the dynamic-range clamp below repairs.
    let mut active: Vec<(f64, usize)> = Vec::new();
    for (idx, (&p, &g)) in powers.iter().zip(gains).enumerate() {
        if p > 0.0 {
            active.push((1.0 / (p * g), idx));
        }
    }
    if active.is_empty() {
        return Ok(row);
    }

    let min_rate = active.iter().map(|&(r, _)| r).fold(f64::INFINITY, f64::min);
    if !min_rate.is_finite() {
        return Err(Error::Validation(
            "every active link rate overflowed; powers are too small to represent".into(),
        ));
    }
    let cap = min_rate * dynamic_range;
    for entry in &mut active {
        entry.0 = entry.0.min(cap);
    }

    // Ascending by rate, column index as the deterministic tie-break.
    active.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
    for pos in 1..active.len() {
        if active[pos].0 <= active[pos - 1].0 * (1.0 + RATE_TIE_TOLERANCE) {
            active[pos].0 *= 1.0 + RATE_JITTER * (pos + 1) as f64;
        }
    }

    for &(rate, idx) in &active {
        row[idx] = rate;
    }
    Ok(row)
}
