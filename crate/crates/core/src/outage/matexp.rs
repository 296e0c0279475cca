//! Matrix-exponential survival of the hypoexponential chain.
//!
//! The sum of exponentials is the absorption time of a pure birth chain whose
//! transient generator is upper bidiagonal: `Θ[k][k] = -λ_k`,
//! `Θ[k][k+1] = λ_k`. The survival function is `F̄(s) = e₁ᵀ exp(Θs) 1`, i.e.
//! the first-row sum of the matrix exponential. Scaling and squaring with a
//! truncated Taylor series is unconditionally stable here: the scaled matrix
//! has norm ≤ 1/2, the exponential of a (sub)generator has entries in [0, 1],
//! and squaring keeps them there, so errors accumulate only additively. The
//! result is accurate to ~1e-14 *absolutely* for any rate configuration —
//! including coincident rates, where the partial-fraction form ceases to
//! exist.

/// Survival `P(T > s)` for `s > 0`.
pub(super) fn survival_matexp(rates: &[f64], s: f64) -> f64 {
    let m = rates.len();
    if m == 1 {
        return (-rates[0] * s).exp();
    }

    // Scaled rates; extreme products are clamped so the arithmetic below
    // stays finite (a summand with λs beyond ~1e300 contributes nothing to
    // the survival at this threshold anyway).
    let mu: Vec<f64> = rates.iter().map(|&l| (l * s).min(1e300)).collect();

    // Choose 2^j so the scaled generator has infinity-norm ≤ 1/2.
    let norm = 2.0 * mu.iter().cloned().fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = 0.5f64.powi(squarings);

    // a = Θ s / 2^j, dense row-major m x m (m ≤ K, tiny).
    let mut a = vec![0.0f64; m * m];
    for k in 0..m {
        a[k * m + k] = -mu[k] * scale;
        if k + 1 < m {
            a[k * m + k + 1] = mu[k] * scale;
        }
    }

    // exp(a) by Taylor: p = I + a + a²/2! + ...; with ‖a‖ ≤ 1/2 the terms
    // decay at least geometrically with ratio ≤ 1/2 / n.
    let mut p = vec![0.0f64; m * m];
    for k in 0..m {
        p[k * m + k] = 1.0;
    }
    let mut term = a.clone();
    for entry in p.iter_mut().zip(&term) {
        *entry.0 += entry.1;
    }
    let mut n = 2.0f64;
    loop {
        term = mat_mul(&term, &a, m);
        let mut max_abs = 0.0f64;
        for t in term.iter_mut() {
            *t /= n;
            max_abs = max_abs.max(t.abs());
        }
        for (pe, te) in p.iter_mut().zip(&term) {
            *pe += te;
        }
        if max_abs < 1e-20 || n > 40.0 {
            break;
        }
        n += 1.0;
    }

    for _ in 0..squarings {
        p = mat_mul(&p, &p, m);
    }

    let survival: f64 = p[..m].iter().sum();
    survival.clamp(0.0, 1.0)
}

fn mat_mul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; m * m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik != 0.0 {
                for j in 0..m {
                    out[i * m + j] += aik * b[k * m + j];
                }
            }
        }
    }
    out
}
