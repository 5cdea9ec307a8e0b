//! Scalar abstractions.
//!
//! [`Real`] is the floating-point type used by the online predictor for
//! feature coordinates and log-domain weights. [`Field`] is the weaker
//! arithmetic needed by the brute-force oracles, implemented for `f32`,
//! `f64`, exact [`BigRational`] and the 256-bit [`Dyadic`], so oracle
//! values can be computed without rounding or with negligible rounding.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, One, Signed, ToPrimitive, Zero};

/// Floating point scalar: `f32` or `f64`.
pub trait Real: Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {
    /// Lossy conversion from `f64`.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    /// `ln(exp(a) + exp(b))` without overflow; `-inf` absorbs.
    #[inline]
    fn log_add_exp(a: Self, b: Self) -> Self {
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        if hi == Self::neg_infinity() {
            return hi;
        }
        hi + (lo - hi).exp().ln_1p()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Exact or approximate field arithmetic for the reference oracles.
pub trait Field:
    Clone
    + Debug
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    /// The value `num / den`.
    fn ratio(num: u64, den: u64) -> Self;

    fn to_f64(&self) -> f64;

    /// Natural logarithm, evaluated in `f64`.
    fn ln(&self) -> f64 {
        self.to_f64().ln()
    }
}

impl Field for f64 {
    fn ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Field for f32 {
    fn ratio(num: u64, den: u64) -> Self {
        (num as f64 / den as f64) as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Field for BigRational {
    fn ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    // Numerator and denominator may exceed the f64 range separately.
    fn ln(&self) -> f64 {
        ratio_ln(self.numer(), self.denom())
    }
}

/// Natural log of `num / den` for positive big integers.
///
/// Taking the logs of numerator and denominator separately cancels
/// catastrophically when both are huge and the quotient is moderate, so the
/// quotient's leading 64 bits are formed by integer division first.
fn ratio_ln(num: &BigInt, den: &BigInt) -> f64 {
    if num.is_zero() {
        return f64::NEG_INFINITY;
    }
    if num.is_negative() != den.is_negative() {
        return f64::NAN;
    }
    let (num, den) = (num.magnitude(), den.magnitude());
    let shift = den.bits() as i64 - num.bits() as i64 + 64;
    let q = if shift >= 0 { (num << shift as u64) / den } else { num / (den << (-shift) as u64) };
    let q = ToPrimitive::to_f64(&q).unwrap_or(f64::NAN);
    if (-950..=960).contains(&shift) {
        // Power-of-two scaling is exact here, so the log sees the quotient itself.
        (q * 2f64.powi(-shift as i32)).ln()
    } else {
        q.ln() - shift as f64 * std::f64::consts::LN_2
    }
}

/// Binary floating point with a 256-bit mantissa: `mant · 2^exp`.
///
/// Exact rationals grow without bound on long switching recursions, since
/// every predictive ratio carries its parents' numerators. This type
/// truncates to [`Dyadic::BITS`] bits after each operation instead, a
/// relative error near `1e-77` per step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dyadic {
    mant: BigInt,
    exp: i64,
}

impl Dyadic {
    pub const BITS: u64 = 256;

    fn normalized(mant: BigInt, exp: i64) -> Self {
        if mant.is_zero() {
            return Dyadic { mant, exp: 0 };
        }
        let bits = mant.bits();
        if bits > Self::BITS {
            let s = bits - Self::BITS;
            Dyadic {
                mant: mant >> s,
                exp: exp + s as i64,
            }
        } else {
            Dyadic { mant, exp }
        }
    }

    /// Leading 64 bits as an `f64` and the power of two that scales them.
    fn leading(&self) -> (f64, i64) {
        let drop = self.mant.bits().saturating_sub(64);
        let top = ToPrimitive::to_f64(&(&self.mant >> drop)).unwrap_or(f64::NAN);
        (top, self.exp + drop as i64)
    }
}

impl From<u64> for Dyadic {
    fn from(x: u64) -> Self {
        Dyadic::normalized(BigInt::from(x), 0)
    }
}

impl Add for Dyadic {
    type Output = Dyadic;

    fn add(self, rhs: Dyadic) -> Dyadic {
        if self.mant.is_zero() {
            return rhs;
        }
        if rhs.mant.is_zero() {
            return self;
        }
        let (hi, lo) = if self.exp >= rhs.exp { (self, rhs) } else { (rhs, self) };
        let gap = (hi.exp - lo.exp) as u64;
        let hi_top = hi.exp + hi.mant.bits() as i64;
        let lo_top = lo.exp + lo.mant.bits() as i64;
        // `lo` lies entirely below the retained precision of `hi`.
        if hi_top - lo_top > 2 * Self::BITS as i64 {
            return hi;
        }
        Dyadic::normalized((hi.mant << gap) + lo.mant, lo.exp)
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;

    fn sub(self, rhs: Dyadic) -> Dyadic {
        self + Dyadic {
            mant: -rhs.mant,
            exp: rhs.exp,
        }
    }
}

impl Mul for Dyadic {
    type Output = Dyadic;

    fn mul(self, rhs: Dyadic) -> Dyadic {
        Dyadic::normalized(self.mant * rhs.mant, self.exp + rhs.exp)
    }
}

impl Div for Dyadic {
    type Output = Dyadic;

    fn div(self, rhs: Dyadic) -> Dyadic {
        assert!(!rhs.mant.is_zero(), "division by zero");
        let shift = (Self::BITS + rhs.mant.bits() + 2).saturating_sub(self.mant.bits());
        Dyadic::normalized((self.mant << shift) / rhs.mant, self.exp - rhs.exp - shift as i64)
    }
}

impl Zero for Dyadic {
    fn zero() -> Self {
        Dyadic {
            mant: BigInt::zero(),
            exp: 0,
        }
    }

    fn is_zero(&self) -> bool {
        self.mant.is_zero()
    }
}

impl One for Dyadic {
    fn one() -> Self {
        Dyadic::from(1)
    }
}

impl Field for Dyadic {
    fn ratio(num: u64, den: u64) -> Self {
        Dyadic::from(num) / Dyadic::from(den)
    }

    fn to_f64(&self) -> f64 {
        let (top, e) = self.leading();
        top * 2f64.powi(e.clamp(-1100, 1100) as i32)
    }

    fn ln(&self) -> f64 {
        if self.mant.is_zero() {
            return f64::NEG_INFINITY;
        }
        if self.mant.is_negative() {
            return f64::NAN;
        }
        let (top, e) = self.leading();
        if (-950..=950).contains(&e) {
            (top * 2f64.powi(e as i32)).ln()
        } else {
            top.ln() + e as f64 * std::f64::consts::LN_2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_exp_matches_direct() {
        let a = -3.0_f64;
        let b = -1.5_f64;
        let direct = (a.exp() + b.exp()).ln();
        assert!((f64::log_add_exp(a, b) - direct).abs() < 1e-15);
        assert_eq!(f64::log_add_exp(f64::NEG_INFINITY, -2.0), -2.0);
        assert_eq!(f64::log_add_exp(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
        // No overflow far from zero.
        assert!((f64::log_add_exp(-1e5, -1e5) - (-1e5 + 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn rational_ln_handles_huge_parts() {
        let one_third = BigRational::ratio(1, 3);
        assert!((Field::ln(&one_third) - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        let big = BigInt::from(3u8).pow(2000);
        let x = BigRational::new(big.clone() * BigInt::from(2u8), big);
        assert!((Field::ln(&x) - 2f64.ln()).abs() < 1e-15);
        // Moderate quotient of parts around 2^900, where separate logs cancel.
        let den = BigInt::from(7u8).pow(320) + BigInt::from(1u8);
        let num = &den * BigInt::from(5u8) / BigInt::from(9u8).pow(8);
        let expect = 5f64.ln() - 8.0 * 9f64.ln();
        assert!((Field::ln(&BigRational::new(num, den)) - expect).abs() < 1e-14);
        assert_eq!(Field::ln(&BigRational::zero()), f64::NEG_INFINITY);
    }

    fn to_dyadic(x: &BigRational) -> Dyadic {
        let num = Dyadic::normalized(x.numer().clone(), 0);
        let den = Dyadic::normalized(x.denom().clone(), 0);
        num / den
    }

    #[test]
    fn dyadic_basic_arithmetic() {
        let third = Dyadic::ratio(1, 3);
        assert!((third.to_f64() - 1.0 / 3.0).abs() < 1e-17);
        let one = third.clone() + third.clone() + third.clone();
        assert!((one.to_f64() - 1.0).abs() < 1e-70);
        let unit = Dyadic::ratio(3, 4) * Dyadic::ratio(4, 3) - Dyadic::one();
        assert!(unit.to_f64().abs() < 1e-70);
        let x = Dyadic::ratio(5, 7) - Dyadic::ratio(5, 7);
        assert!(x.is_zero());
        assert!(Dyadic::ratio(1, 2).ln() - 0.5f64.ln() == 0.0);
        assert_eq!(Dyadic::zero().ln(), f64::NEG_INFINITY);
        // Far below the f64 range.
        let mut tiny = Dyadic::one();
        for _ in 0..40 {
            tiny = tiny * Dyadic::ratio(1, 1 << 40);
        }
        assert!((tiny.ln() - (-1600.0 * 2f64.ln())).abs() < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn dyadic_tracks_rationals(ops in proptest::collection::vec((0u8..4, 1u64..1000, 1u64..1000), 1..40)) {
            let mut exact = BigRational::one();
            let mut approx = Dyadic::one();
            for (op, a, b) in ops {
                let (qe, qa) = (BigRational::ratio(a, b), Dyadic::ratio(a, b));
                match op {
                    0 => { exact = exact + qe; approx = approx + qa; }
                    1 => { exact = exact * qe; approx = approx * qa; }
                    2 => { exact = exact / qe; approx = approx / qa; }
                    // Keeps the value positive.
                    _ => { exact = exact.clone() + exact * qe; approx = approx.clone() + approx * qa; }
                }
            }
            let err = (to_dyadic(&exact) - approx.clone()) / approx;
            proptest::prop_assert!(err.to_f64().abs() < 1e-60);
        }
    }
}
