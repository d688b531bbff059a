//! Scalar abstractions.
//!
//! Numerical code in this crate is generic over [`Scalar`] (`f32` or `f64`).
//! Metric ratios are generic over the weaker [`Ratio`] trait, which is also
//! implemented for exact rationals so metric identities can be checked
//! without rounding.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_rational::Ratio as Rational;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type used by images, the model and the optimizer.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Storage tag written into checkpoints.
    const DTYPE: &'static str;

    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
}

/// Field-like numbers that metric ratios can be computed in.
pub trait Ratio: Clone + PartialOrd + Debug + num_traits::Num {
    fn from_count(n: u64) -> Self;
    fn to_f64(&self) -> f64;
}

impl Ratio for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }
    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Ratio for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Ratio for Rational<i128> {
    fn from_count(n: u64) -> Self {
        Rational::from_integer(i128::from(n))
    }
    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

impl Ratio for Rational<i64> {
    fn from_count(n: u64) -> Self {
        Rational::from_integer(i64::try_from(n).expect("count fits in i64"))
    }
    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}
