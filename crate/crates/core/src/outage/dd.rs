//! Double-double evaluation of the partial-fraction closed form.
//!
//! A double-double value is an unevaluated sum `hi + lo` of two f64s with
//! `|lo| ≤ ulp(hi)/2`, giving ~106 bits (~31 decimal digits). The error-free
//! primitives (`two_sum`, and `two_prod` via fused multiply-add) make the
//! basic operations exact up to one double-double rounding, which buys the
//! closed form 15 extra digits of headroom against the alternating-`A_k`
//! cancellation. The route reports its own estimated error and declines (so
//! the caller can fall through to the matrix exponential) when even 31 digits
//! are not enough.

/// ln 2 split to double-double precision (for range reduction in exp).
const LN2_HI: f64 = 0.6931471805599453;
const LN2_LO: f64 = 2.3190468138462996e-17;

#[derive(Clone, Copy, Debug)]
struct Dd {
    hi: f64,
    lo: f64,
}

/// Error-free sum: returns (fl(a+b), exact residual).
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Error-free sum assuming |a| ≥ |b|.
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// Error-free product via FMA: a*b = p + e exactly.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    #[inline]
    fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// The exact difference a - b of two f64s as a double-double.
    #[inline]
    fn from_diff(a: f64, b: f64) -> Dd {
        let (s, e) = two_sum(a, -b);
        Dd { hi: s, lo: e }
    }

    /// The exact product of two f64s as a double-double.
    #[inline]
    fn from_prod(a: f64, b: f64) -> Dd {
        let (p, e) = two_prod(a, b);
        Dd { hi: p, lo: e }
    }

    #[inline]
    fn add(self, o: Dd) -> Dd {
        let (s1, s2) = two_sum(self.hi, o.hi);
        let (t1, t2) = two_sum(self.lo, o.lo);
        let s2 = s2 + t1;
        let (s1, s2) = quick_two_sum(s1, s2);
        let s2 = s2 + t2;
        let (hi, lo) = quick_two_sum(s1, s2);
        Dd { hi, lo }
    }

    #[inline]
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    #[inline]
    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    #[inline]
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    #[inline]
    fn mul_f64(self, f: f64) -> Dd {
        let (p, e) = two_prod(self.hi, f);
        let e = e + self.lo * f;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f64(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f64(q2));
        let q3 = r.hi / o.hi;
        let (s, e) = quick_two_sum(q1, q2);
        Dd { hi: s, lo: e }.add(Dd::from(q3))
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    fn abs(self) -> Dd {
        if self.hi < 0.0 {
            self.neg()
        } else {
            self
        }
    }

    /// e^x for |x| up to ~700 by range reduction x = k ln2 + r, |r| ≤ ln2/2,
    /// Taylor on r, and an exact scale by 2^k.
    fn exp(self) -> Dd {
        if self.hi < -745.0 {
            return Dd::ZERO; // below the f64 underflow threshold
        }
        let k = (self.hi / LN2_HI).round();
        let ln2 = Dd {
            hi: LN2_HI,
            lo: LN2_LO,
        };
        let r = self.sub(ln2.mul_f64(k));

        let mut sum = Dd::ONE.add(r);
        let mut term = r;
        let mut n = 2.0f64;
        loop {
            // The division must stay in double-double: a rounded f64
            // reciprocal would cap the whole series at f64 accuracy.
            term = term.mul(r).div(Dd::from(n));
            sum = sum.add(term);
            if term.hi.abs() < 1e-35 || n > 40.0 {
                break;
            }
            n += 1.0;
        }
        let scale = 2f64.powi(k as i32);
        Dd {
            hi: sum.hi * scale,
            lo: sum.lo * scale,
        }
    }

    /// 1 - e^(-x) for x ≥ 0 without cancellation: alternating Taylor for small
    /// x, direct complement otherwise.
    fn one_minus_exp_neg(self) -> Dd {
        if self.hi < 0.5 {
            // x - x²/2! + x³/3! - ...
            let mut sum = self;
            let mut term = self;
            let mut n = 2.0f64;
            loop {
                term = term.mul(self).div(Dd::from(n));
                if n as u64 % 2 == 0 {
                    sum = sum.sub(term);
                } else {
                    sum = sum.add(term);
                }
                if term.hi.abs() < sum.hi.abs() * 1e-34 || n > 50.0 {
                    break;
                }
                n += 1.0;
            }
            sum
        } else {
            Dd::ONE.sub(self.neg().exp())
        }
    }
}

/// Closed-form outage in double-double arithmetic.
///
/// Returns `Some(ε)` when the route's own error estimate (per-term roundoff
/// at double-double precision) stays below `gate` times the result; `None`
/// means even ~31 digits cannot certify the target accuracy and the caller
/// should use the matrix-exponential fallback.
pub(super) fn outage_dd(rates: &[f64], s: f64, gate: f64, dd_roundoff: f64) -> Option<f64> {
    let m = rates.len();
    let mut sum = Dd::ZERO;
    let mut abs_terms = 0.0f64;
    for k in 0..m {
        let mut a = Dd::ONE;
        for j in 0..m {
            if j != k {
                a = a.mul(Dd::from(rates[j]).div(Dd::from_diff(rates[j], rates[k])));
            }
        }
        let term = a.mul(Dd::from_prod(rates[k], s).one_minus_exp_neg());
        sum = sum.add(term);
        abs_terms += term.abs().to_f64();
    }
    let eps = sum.to_f64();
    let err = 2.0 * m as f64 * dd_roundoff * abs_terms + dd_roundoff * eps.abs();
    if eps.is_finite() && eps > 0.0 && err <= gate * eps {
        Some(eps)
    } else {
        None
    }
}
