//! Outage probability of hypoexponentially distributed received power.
//!
//! The total power a user receives is a sum of independent exponential terms
//! with pairwise-distinct rates `λ_k`. Its survival function has the classic
//! partial-fraction form
//!
//! ```text
//! F̄(s) = Σ_k A_k e^(-λ_k s),   A_k = Π_{j≠k} λ_j / (λ_j - λ_k),
//! ```
//!
//! and the outage probability is `ε(s) = Σ_k A_k (1 - e^(-λ_k s))`. The `A_k`
//! alternate in sign and blow up as rates approach each other, so a plain f64
//! evaluation loses exactly the small probabilities the system is sized for
//! (`ε` down to 1e-12). Evaluation is therefore routed by explicit error
//! estimates:
//!
//! 1. compensated-summation closed form in f64, accepted only when both a
//!    conservative conditioning bound (`Σ|A_k|` times unit roundoff, kept
//!    below 1e-2 of the result) and a sharper per-term roundoff estimate
//!    (kept below 1e-9 of the result) pass;
//! 2. an alternating series in the scaled rates `μ_k = λ_k s`, used when
//!    `max μ_k ≤ 1/2` — cancellation-free and relatively accurate, which is
//!    precisely the regime of very small `ε`;
//! 3. the same closed form in double-double arithmetic (~31 significant
//!    digits), with the analogous sharp error gate;
//! 4. a scaling-and-squaring matrix exponential of the bidiagonal chain
//!    generator, absolutely accurate for any rate configuration.
//!
//! The Monte Carlo estimator in this module is an *oracle* for testing, never
//! part of the evaluation path.

mod dd;
mod matexp;
mod mc;
mod series;

pub use mc::{outage_mc, McEstimate};

use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::channel;
use crate::error::{Error, Result};

/// Unit roundoff of f64 (half an ulp at 1.0).
const UNIT_ROUNDOFF: f64 = f64::EPSILON / 2.0;
/// Unit roundoff of double-double arithmetic.
const DD_ROUNDOFF: f64 = 1e-31;
/// Hard floor for the closed form: estimated absolute error must stay below
/// this fraction of the result.
const COND_FLOOR: f64 = 1e-2;
/// Sharper acceptance gate: the per-term roundoff estimate must stay below
/// this fraction of the result for the f64 (and double-double) closed form.
const SHARP_GATE: f64 = 1e-9;

/// How an outage value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Compensated f64 closed form.
    ClosedForm,
    /// One of the stable fallbacks (series, double-double, or matrix
    /// exponential).
    StableFallback,
    /// Monte Carlo estimate.
    MonteCarlo,
}

/// An outage probability together with the evaluation route that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageResult {
    pub epsilon: f64,
    pub method: Method,
}

/// Sum of independent exponentials with strictly positive, pairwise-distinct
/// rates. Construction canonicalizes the rate order (ascending), which makes
/// every downstream evaluation exactly permutation invariant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypoExp {
    rates: Vec<f64>,
}

impl HypoExp {
    /// Validates and canonicalizes a rate set.
    ///
    /// Rates must be finite, strictly positive, and pairwise distinct; rate
    /// construction upstream ([`channel::link_rates`]) guarantees a relative
    /// separation of at least [`channel::RATE_TIE_TOLERANCE`].
    pub fn new(mut rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Validation("at least one rate required".into()));
        }
        for (i, &r) in rates.iter().enumerate() {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::Validation(format!(
                    "rates must be finite and positive, got {r} at index {i}"
                )));
            }
        }
        rates.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
        if rates.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation(
                "rates must be pairwise distinct (jitter ties upstream)".into(),
            ));
        }
        Ok(HypoExp { rates })
    }

    /// The rates in canonical (ascending) order.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Partial-fraction coefficients `A_k = Π_{j≠k} λ_j / (λ_j - λ_k)`.
    ///
    /// These weight the per-stage exponentials in the closed form and sum to
    /// one exactly in real arithmetic; exposing them lets diagnostics check
    /// that identity on the f64 path.
    pub fn coefficients(&self) -> Vec<f64> {
        let m = self.rates.len();
        let mut a = vec![1.0; m];
        for k in 0..m {
            for j in 0..m {
                if j != k {
                    a[k] *= self.rates[j] / (self.rates[j] - self.rates[k]);
                }
            }
        }
        a
    }

    fn check_threshold(&self, s: f64) -> Result<()> {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::Range(format!(
                "sensitivity threshold must be finite and non-negative, got {s}"
            )));
        }
        Ok(())
    }

    /// Survival function `P(T > s)`.
    ///
    /// Uses the compensated closed form and falls back to the matrix
    /// exponential when the conditioning estimate rejects it.
    pub fn survival(&self, s: f64) -> Result<f64> {
        Ok(self.survival_detailed(s)?.0)
    }

    /// Survival function together with the evaluation route used.
    pub fn survival_detailed(&self, s: f64) -> Result<(f64, Method)> {
        self.check_threshold(s)?;
        if s == 0.0 {
            return Ok((1.0, Method::ClosedForm));
        }
        if self.rates.len() == 1 {
            return Ok(((-self.rates[0] * s).exp(), Method::ClosedForm));
        }

        let coeff = self.coefficients();
        let mut sum = NeumaierSum::new();
        let mut abs_coeff = 0.0;
        let mut abs_terms = 0.0;
        for (&a, &l) in coeff.iter().zip(&self.rates) {
            let term = a * (-l * s).exp();
            sum.add(term);
            abs_coeff += a.abs();
            abs_terms += term.abs();
        }
        let value = sum.value();
        let m = self.rates.len() as f64;
        let sharp_err = 2.0 * m * UNIT_ROUNDOFF * abs_terms + UNIT_ROUNDOFF * value.abs();
        let ok = value.is_finite()
            && value > 0.0
            && abs_coeff * UNIT_ROUNDOFF <= COND_FLOOR * value
            && sharp_err <= SHARP_GATE * value;
        if ok {
            DIAG.closed_form.fetch_add(1, Ordering::Relaxed);
            Ok((clamp_unit(value), Method::ClosedForm))
        } else {
            DIAG.matexp_fallback.fetch_add(1, Ordering::Relaxed);
            Ok((matexp::survival_matexp(&self.rates, s), Method::StableFallback))
        }
    }

    /// Outage probability `ε(s) = P(T < s)`, evaluated by the route whose
    /// error estimate admits the target accuracy (see the module docs).
    pub fn outage(&self, s: f64) -> Result<OutageResult> {
        self.check_threshold(s)?;
        if s == 0.0 {
            return Ok(OutageResult {
                epsilon: 0.0,
                method: Method::ClosedForm,
            });
        }
        if self.rates.len() == 1 {
            // -expm1(-x) is 1 - e^(-x) without cancellation for small x.
            let eps = -f64::exp_m1(-self.rates[0] * s);
            DIAG.closed_form.fetch_add(1, Ordering::Relaxed);
            return Ok(OutageResult {
                epsilon: clamp_unit(eps),
                method: Method::ClosedForm,
            });
        }

        let coeff = self.coefficients();
        let mut sum = NeumaierSum::new();
        let mut abs_coeff = 0.0;
        let mut abs_terms = 0.0;
        for (&a, &l) in coeff.iter().zip(&self.rates) {
            let term = a * (-f64::exp_m1(-l * s));
            sum.add(term);
            abs_coeff += a.abs();
            abs_terms += term.abs();
        }
        let eps_cf = sum.value();
        let m = self.rates.len() as f64;
        let sharp_err = 2.0 * m * UNIT_ROUNDOFF * abs_terms + UNIT_ROUNDOFF * eps_cf.abs();
        let ok = eps_cf.is_finite()
            && eps_cf > 0.0
            && abs_coeff * UNIT_ROUNDOFF <= COND_FLOOR * eps_cf
            && sharp_err <= SHARP_GATE * eps_cf;
        if ok {
            DIAG.closed_form.fetch_add(1, Ordering::Relaxed);
            return Ok(OutageResult {
                epsilon: clamp_unit(eps_cf),
                method: Method::ClosedForm,
            });
        }

        // Stable fallbacks, cheapest adequate route first.
        let mu_max = self.rates.last().unwrap() * s;
        if mu_max <= series::MU_MAX {
            DIAG.series_fallback.fetch_add(1, Ordering::Relaxed);
            return Ok(OutageResult {
                epsilon: clamp_unit(series::outage_series(&self.rates, s)),
                method: Method::StableFallback,
            });
        }

        if let Some(eps_dd) = dd::outage_dd(&self.rates, s, SHARP_GATE, DD_ROUNDOFF) {
            DIAG.dd_fallback.fetch_add(1, Ordering::Relaxed);
            return Ok(OutageResult {
                epsilon: clamp_unit(eps_dd),
                method: Method::StableFallback,
            });
        }

        DIAG.matexp_fallback.fetch_add(1, Ordering::Relaxed);
        let eps = 1.0 - matexp::survival_matexp(&self.rates, s);
        Ok(OutageResult {
            epsilon: clamp_unit(eps),
            method: Method::StableFallback,
        })
    }
}

/// Hypoexponential CDF via the bidiagonal-generator matrix exponential
/// (`CDF = 1 - e₁ᵀ exp(Θs) 1`), evaluated with scaling and squaring.
///
/// This is the unconditionally stable route: absolutely accurate for any rate
/// configuration, including near-coincident rates where the partial-fraction
/// closed form is unusable. Agrees with [`HypoExp::outage`] to high relative
/// accuracy on well-separated rates.
pub fn stable_cdf(d: &HypoExp, s: f64) -> Result<f64> {
    d.check_threshold(s)?;
    if s == 0.0 {
        return Ok(0.0);
    }
    if d.rates.len() == 1 {
        return Ok(clamp_unit(-f64::exp_m1(-d.rates[0] * s)));
    }
    Ok(clamp_unit(1.0 - matexp::survival_matexp(&d.rates, s)))
}

/// Outage probability of one user given its power and gain rows.
///
/// Composes the rate construction of [`channel::link_rates`] (including the
/// dynamic-range clamp and tie jitter) with [`HypoExp::outage`]. An all-zero
/// allocation receives no power, so the outage is exactly 1.
pub fn user_outage(
    powers: &[f64],
    gains: &[f64],
    sensitivity: f64,
    dynamic_range: f64,
) -> Result<OutageResult> {
    if !(sensitivity.is_finite() && sensitivity > 0.0) {
        return Err(Error::Validation(format!(
            "sensitivity must be positive, got {sensitivity}"
        )));
    }
    let row = channel::row_rates(powers, gains, dynamic_range)?;
    let active: Vec<f64> = row.into_iter().filter(|&r| r > 0.0).collect();
    if active.is_empty() {
        return Ok(OutageResult {
            epsilon: 1.0,
            method: Method::ClosedForm,
        });
    }
    HypoExp::new(active)?.outage(sensitivity)
}

/// Clamp a probability into `[0, 1]`, counting out-of-range events.
fn clamp_unit(p: f64) -> f64 {
    if p < 0.0 {
        DIAG.clamp_events.fetch_add(1, Ordering::Relaxed);
        0.0
    } else if p > 1.0 {
        DIAG.clamp_events.fetch_add(1, Ordering::Relaxed);
        1.0
    } else {
        p
    }
}

/// Neumaier-compensated running sum: roundoff of the additions themselves is
/// captured in a correction term, leaving term-formation error as the only
/// significant residual.
struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    fn new() -> Self {
        NeumaierSum {
            sum: 0.0,
            compensation: 0.0,
        }
    }

    fn add(&mut self, t: f64) {
        let new = self.sum + t;
        if self.sum.abs() >= t.abs() {
            self.compensation += (self.sum - new) + t;
        } else {
            self.compensation += (t - new) + self.sum;
        }
        self.sum = new;
    }

    fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Monotone counters describing which evaluation routes ran and how often the
/// final clamp engaged. Counters are process-global and thread-safe.
#[derive(Default)]
struct DiagCounters {
    closed_form: AtomicU64,
    series_fallback: AtomicU64,
    dd_fallback: AtomicU64,
    matexp_fallback: AtomicU64,
    clamp_events: AtomicU64,
}

static DIAG: DiagCounters = DiagCounters {
    closed_form: AtomicU64::new(0),
    series_fallback: AtomicU64::new(0),
    dd_fallback: AtomicU64::new(0),
    matexp_fallback: AtomicU64::new(0),
    clamp_events: AtomicU64::new(0),
};

/// Snapshot of the evaluation-route counters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagSnapshot {
    pub closed_form: u64,
    pub series_fallback: u64,
    pub dd_fallback: u64,
    pub matexp_fallback: u64,
    pub clamp_events: u64,
}

/// Reads the process-global evaluation counters.
pub fn diagnostics() -> DiagSnapshot {
    DiagSnapshot {
        closed_form: DIAG.closed_form.load(Ordering::Relaxed),
        series_fallback: DIAG.series_fallback.load(Ordering::Relaxed),
        dd_fallback: DIAG.dd_fallback.load(Ordering::Relaxed),
        matexp_fallback: DIAG.matexp_fallback.load(Ordering::Relaxed),
        clamp_events: DIAG.clamp_events.load(Ordering::Relaxed),
    }
}
