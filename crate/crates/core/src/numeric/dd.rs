//! Double-double arithmetic (an unevaluated sum `hi + lo` of two f64s,
//! about 32 significant digits). Used to evaluate losses precisely enough
//! that central differences are not dominated by f64 round-off.

use std::cmp::Ordering;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    hi: f64,
    lo: f64,
}

const LN2: Dd = Dd {
    hi: 0.6931471805599453,
    lo: 2.3190468138462996e-17,
};

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    fn renorm(hi: f64, lo: f64) -> Dd {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn ldexp(self, k: i32) -> Dd {
        let s = 2f64.powi(k);
        Dd {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn exp(self) -> Dd {
        if self.hi > 709.0 {
            return Dd {
                hi: f64::INFINITY,
                lo: 0.0,
            };
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        // |r| ≤ ln2/2, then scaled down by 2^9 so the series converges fast.
        let r = (self - LN2 * k).ldexp(-9);
        let mut term = r;
        let mut sum = r;
        for n in 2..=12 {
            term = term * r / n as f64;
            sum += term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        // e^{2x} − 1 = (e^x − 1)(e^x − 1 + 2)
        for _ in 0..9 {
            sum = sum * (sum + 2.0);
        }
        (sum + 1.0).ldexp(k as i32)
    }

    pub fn ln(self) -> Dd {
        assert!(self.hi > 0.0, "ln of a non-positive value");
        let mut x = Dd::from(self.hi.ln());
        for _ in 0..2 {
            x = x + self * (-x).exp() - 1.0;
        }
        x
    }

    pub fn tanh(self) -> Dd {
        let e = (self.abs() * -2.0).exp();
        let t = (Dd::ONE - e) / (Dd::ONE + e);
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }

    pub fn sigmoid(self) -> Dd {
        if self.hi >= 0.0 {
            Dd::ONE / (Dd::ONE + (-self).exp())
        } else {
            let e = self.exp();
            e / (Dd::ONE + e)
        }
    }

    pub fn abs(self) -> Dd {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn max(self, other: Dd) -> Dd {
        if other > self {
            other
        } else {
            self
        }
    }
}

/// `log Σ exp(x)`; `-inf` for an empty slice.
pub fn dd_log_sum_exp(xs: &[Dd]) -> Dd {
    let Some(m) = xs.iter().copied().reduce(Dd::max) else {
        return Dd::from(f64::NEG_INFINITY);
    };
    let mut sum = Dd::ZERO;
    for &x in xs {
        sum += (x - m).exp();
    }
    m + sum.ln()
}

impl From<f64> for Dd {
    fn from(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }
}

impl PartialOrd for Dd {
    fn partial_cmp(&self, other: &Dd) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            o => Some(o),
        }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::renorm(s, e + f)
    }
}

impl Add<f64> for Dd {
    type Output = Dd;
    fn add(self, b: f64) -> Dd {
        let (s, e) = two_sum(self.hi, b);
        Dd::renorm(s, e + self.lo)
    }
}

impl AddAssign for Dd {
    fn add_assign(&mut self, b: Dd) {
        *self = *self + b;
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Sub<f64> for Dd {
    type Output = Dd;
    fn sub(self, b: f64) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        Dd::renorm(p, e + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Mul<f64> for Dd {
    type Output = Dd;
    fn mul(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        Dd::renorm(p, e + self.lo * b)
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * q1;
        let q2 = r.hi / b.hi;
        let r = r - b * q2;
        let q3 = r.hi / b.hi;
        Dd::renorm(q1, q2) + q3
    }
}

impl Div<f64> for Dd {
    type Output = Dd;
    fn div(self, b: f64) -> Dd {
        self / Dd::from(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Dd, hi: f64, lo: f64, rel: f64) {
        let err = ((a - Dd { hi, lo }).to_f64() / hi).abs();
        assert!(err < rel, "{a:?} vs ({hi}, {lo}): {err:e}");
    }

    // Reference pairs are the nearest double-double to values computed with
    // 60-digit arithmetic.
    #[test]
    fn transcendental_reference_values() {
        close(Dd::ONE.exp(), 2.718281828459045, 1.4456468917292502e-16, 1e-30);
        close(Dd::from(-1.7).exp(), 0.18268352405273466, -5.430659906894856e-18, 1e-30);
        close(Dd::from(10.25).exp(), 28282.541920334977, 1.6137346351068288e-12, 1e-30);
        close(Dd::from(3.0).ln(), 1.0986122886681098, -9.07129723500153e-17, 1e-30);
        close(Dd::from(0.3).tanh(), 0.2913126124515909, -6.4602656586469586e-18, 1e-30);
        close(Dd::from(-2.5).sigmoid(), 0.07585818002124355, 5.328066821693456e-18, 1e-30);
        close(Dd::from(2.0).ln(), LN2.hi, LN2.lo, 1e-30);
    }

    #[test]
    fn arithmetic_beyond_f64() {
        let third = Dd::ONE / 3.0;
        let back = third * 3.0 - 1.0;
        assert!(back.to_f64().abs() < 1e-31);
        let tiny = Dd::from(1.0) + 1e-20;
        assert_eq!((tiny - 1.0).to_f64(), 1e-20);
    }

    #[test]
    fn exp_ln_inverse() {
        for x in [1e-3, 0.5, 1.0, 7.25, 123.0] {
            let d = Dd::from(x);
            assert!(((d.ln().exp() - d) / d).to_f64().abs() < 1e-30);
        }
    }

    #[test]
    fn log_sum_exp_matches_f64() {
        let xs = [0.1, -2.0, 3.5];
        let dd: Vec<Dd> = xs.iter().map(|&x| Dd::from(x)).collect();
        let f = crate::numeric::log_sum_exp(&xs);
        assert!((dd_log_sum_exp(&dd).to_f64() - f).abs() < 1e-14);
    }

    #[test]
    fn extremes() {
        assert_eq!(Dd::from(-800.0).exp(), Dd::ZERO);
        assert_eq!(Dd::from(40.0).tanh().to_f64(), 1.0);
        assert_eq!(Dd::from(-40.0).tanh().to_f64(), -1.0);
        assert_eq!(Dd::ZERO.sigmoid().to_f64(), 0.5);
    }
}
