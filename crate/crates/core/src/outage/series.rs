//! Small-threshold series for the hypoexponential CDF.
//!
//! With `μ_k = λ_k s`, scaling the summands by `s` gives
//!
//! ```text
//! ε = (Π_k μ_k) Σ_{j≥0} (-1)^j h_j(μ) / (m + j)!
//! ```
//!
//! where `h_j` is the complete homogeneous symmetric polynomial of degree `j`
//! (the Dirichlet integral over the simplex supplies the factorial). Every
//! `h_j` is a sum of positive monomials, so the only cancellation is the
//! explicit alternating sign, and with `max μ_k ≤ 1/2` the term ratio is at
//! most `Σ μ_k / (m+1) ≤ m / (2(m+1)) < 1/2`: terms decrease monotonically
//! and the truncation error is bounded by the first omitted term. The result
//! is accurate to a few ulps *relative* error however small ε is — exactly
//! what the f64 closed form cannot deliver for clustered rates.

/// Largest scaled rate for which this route is used.
pub(super) const MU_MAX: f64 = 0.5;

/// Maximum series order; with the term-ratio bound above, 120 terms cover
/// every representable magnitude with a wide margin.
const MAX_TERMS: usize = 120;

/// Evaluates the outage probability; caller guarantees `λ_max·s ≤ MU_MAX`.
pub(super) fn outage_series(rates: &[f64], s: f64) -> f64 {
    let m = rates.len();
    let mu: Vec<f64> = rates.iter().map(|&l| l * s).collect();

    // Leading factor Π μ_k / m!, interleaved to postpone underflow. If it
    // still underflows the true outage is below the smallest positive f64.
    let mut lead = 1.0f64;
    for (i, &u) in mu.iter().enumerate() {
        lead *= u / (i as f64 + 1.0);
    }
    if lead == 0.0 {
        return 0.0;
    }

    // h[j] built by the product recurrence of Π 1/(1 - μ_k x): ascending j so
    // each pass reuses its own updated h[j-1].
    let mut h = [0.0f64; MAX_TERMS + 1];
    h[0] = 1.0;
    for &u in &mu {
        for j in 1..=MAX_TERMS {
            h[j] += u * h[j - 1];
        }
    }

    let mut sum = 0.0f64;
    let mut scale = lead; // lead / ((m+1)(m+2)...(m+j)) at step j
    for j in 0..=MAX_TERMS {
        let term = scale * h[j];
        if j % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
        scale /= m as f64 + j as f64 + 1.0;
        // Alternating with decreasing terms: remainder ≤ next term.
        if scale * h[j + 1] <= sum.abs() * 1e-18 {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_single_exponential_expansion() {
        // m=1: ε = 1 - e^(-μ); the series must agree to full precision.
        for mu in [1e-12, 1e-6, 0.1, 0.5] {
            let exact = -f64::exp_m1(-mu);
            let got = outage_series(&[1.0], mu);
            assert!(
                (got - exact).abs() / exact < 1e-14,
                "mu={mu}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn matches_erlang_two() {
        // Two equal-ish rates: ε = 1 - (1+μ)e^(-μ) for exactly equal rates;
        // with a 1e-9 split the difference is far below the tolerance.
        let mu = 0.3f64;
        let exact = 1.0 - (1.0 + mu) * (-mu).exp();
        let got = outage_series(&[1.0, 1.0 + 1e-9], mu);
        assert!((got - exact).abs() / exact < 1e-8);
    }

    #[test]
    fn tiny_epsilon_keeps_relative_accuracy() {
        // m=3 with μ = 1e-5 each: ε ≈ μ³/6 (1 - 3μ/4 ...) ~ 1.7e-16; the
        // series must not lose relative accuracy at this scale.
        let got = outage_series(&[1.0, 1.0000001, 1.0000002], 1e-5);
        let lead = 1e-15 / 6.0;
        assert!(got > 0.0);
        let ratio = got / lead;
        assert!(
            (0.99..1.0).contains(&ratio),
            "ratio to leading order: {ratio}"
        );
    }

    #[test]
    fn underflow_returns_zero() {
        let got = outage_series(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 1e-60);
        assert_eq!(got, 0.0);
    }
}
