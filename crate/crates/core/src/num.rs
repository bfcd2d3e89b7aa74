//! Scalar types used for weights, latencies, impacts and dual values.
//!
//! All scheduling and certification code is generic over [`Scalar`]. The exact
//! rational types are the ones to use for certification, since the checks are
//! equalities and tight inequalities; the float impls exist for quick
//! exploratory runs.

use std::fmt::{Debug, Display};
use std::ops::Neg;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Num, Signed, ToPrimitive};

pub trait Scalar:
    Clone + Debug + Display + PartialOrd + Num + Neg<Output = Self> + Send + Sync + 'static
{
    fn from_int(n: i64) -> Self;

    /// `num / den`; `den` must be nonzero.
    fn ratio(num: i64, den: i64) -> Self {
        Self::from_int(num) / Self::from_int(den)
    }

    /// Smallest integer not below `self`.
    fn ceil_int(&self) -> i64;

    fn to_f64(&self) -> f64;

    /// Lossless text form (`num/den` for rationals).
    fn exact_string(&self) -> String {
        self.to_string()
    }

    fn mul_int(&self, k: i64) -> Self {
        self.clone() * Self::from_int(k)
    }

    fn is_positive(&self) -> bool {
        *self > Self::zero()
    }
}

/// The default exact scalar.
pub type Rational = BigRational;

impl Scalar for BigRational {
    fn from_int(n: i64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn ceil_int(&self) -> i64 {
        self.ceil()
            .to_integer()
            .to_i64()
            .expect("ceiling out of i64 range")
    }

    fn to_f64(&self) -> f64 {
        let n = self.numer().to_f64().unwrap_or(f64::NAN);
        let d = self.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    }

    fn mul_int(&self, k: i64) -> Self {
        self * BigInt::from(k)
    }

    fn is_positive(&self) -> bool {
        Signed::is_positive(self)
    }
}

impl Scalar for Ratio<i64> {
    fn from_int(n: i64) -> Self {
        Ratio::from_integer(n)
    }

    fn ratio(num: i64, den: i64) -> Self {
        Ratio::new(num, den)
    }

    fn ceil_int(&self) -> i64 {
        self.ceil().to_integer()
    }

    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }

    fn mul_int(&self, k: i64) -> Self {
        self * k
    }
}

macro_rules! impl_float_scalar {
    ($f:ty) => {
        impl Scalar for $f {
            fn from_int(n: i64) -> Self {
                n as $f
            }

            fn ceil_int(&self) -> i64 {
                <$f>::ceil(*self) as i64
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }
        }
    };
}

impl_float_scalar!(f32);
impl_float_scalar!(f64);

pub(crate) fn sum<W: Scalar, I: IntoIterator<Item = W>>(it: I) -> W {
    it.into_iter().fold(W::zero(), |acc, x| acc + x)
}

pub(crate) fn max_of<W: Scalar>(a: Option<W>, b: W) -> Option<W> {
    match a {
        Some(a) if a >= b => Some(a),
        _ => Some(b),
    }
}

pub(crate) fn min_of<W: Scalar>(a: Option<W>, b: W) -> Option<W> {
    match a {
        Some(a) if a <= b => Some(a),
        _ => Some(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_matches_across_types() {
        assert_eq!(Rational::ratio(5, 2).ceil_int(), 3);
        assert_eq!(Rational::from_int(3).ceil_int(), 3);
        assert_eq!(Ratio::<i64>::new(1, 2).ceil_int(), 1);
        assert_eq!(2.5f64.ceil_int(), 3);
        assert_eq!(Rational::ratio(5, 2).exact_string(), "5/2");
        assert_eq!(Rational::from_int(7).exact_string(), "7");
        assert!((Scalar::to_f64(&Rational::ratio(1, 3)) - 1.0 / 3.0).abs() < 1e-15);
    }
}
