//! Scalar abstractions for the closed-form parts of the library.
//!
//! The Hermite basis and the orthogonal decomposition are pure arithmetic and
//! are written against these traits, so they can be evaluated in `f32`, `f64`
//! or exactly over `BigRational`. Everything that samples, factorizes or
//! optimizes works in `f64`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive};

/// Field arithmetic with ordering and absolute value: `f32`, `f64`, rationals.
pub trait Field:
    Clone + PartialOrd + Signed + FromPrimitive + std::fmt::Debug + Send + Sync + 'static
{
    /// Exact conversion of small integers.
    fn from_int(v: i64) -> Self {
        Self::from_i64(v).expect("integer representable in field")
    }

    fn to_f64_lossy(&self) -> f64;
}

impl Field for f64 {
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl Field for f32 {
    fn to_f64_lossy(&self) -> f64 {
        *self as f64
    }
}

impl Field for BigRational {
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Floating-point reals (`f32`, `f64`).
pub trait Real: Field + num_traits::Float {}

impl Real for f32 {}
impl Real for f64 {}

/// Exact rational from a decimal-free ratio of integers.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
