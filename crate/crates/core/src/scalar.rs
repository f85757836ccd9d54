//! Scalar field abstraction shared by the tensor layer and the closed-form maps.

use std::fmt::Debug;

use num::BigRational;
use num_traits::{Num, Signed, ToPrimitive};

/// Field element usable as a tensor entry.
///
/// Implemented for `f32`, `f64` and [`BigRational`]; the rational case gives
/// exact arithmetic for rank computations.
pub trait Scalar: Num + Signed + Clone + Debug + PartialOrd + Send + Sync + 'static {
    fn from_i64(v: i64) -> Self;

    fn ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }

    fn to_f64(&self) -> f64;

    /// Always true for exact types.
    fn is_finite(&self) -> bool;

    /// Equality up to `tol` for floats, exact equality for rationals.
    fn close_to(&self, other: &Self, tol: f64) -> bool {
        (self.clone() - other.clone()).abs().to_f64() <= tol
    }
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn from_i64(v: i64) -> Self {
                v as $t
            }
            fn to_f64(&self) -> f64 {
                *self as f64
            }
            fn is_finite(&self) -> bool {
                <$t>::is_finite(*self)
            }
        }
    };
}

float_scalar!(f32);
float_scalar!(f64);

impl Scalar for BigRational {
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(v.into())
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn is_finite(&self) -> bool {
        true
    }
    fn close_to(&self, other: &Self, _tol: f64) -> bool {
        self == other
    }
}
