//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the renderer and optimizer are written against.
///
/// Implemented for `f32` and `f64`. All literals inside generic code go through
/// [`Real::lit`] so constants stay exact in `f64` and round once in `f32`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn count(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ln(1 + e^x)` without overflow for large `x`.
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::lit(30.0) {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn inverse_softplus<T: Real>(y: T) -> T {
    // ln(e^y - 1) = y + ln(1 - e^-y)
    if y > T::lit(20.0) {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_roundtrip() {
        for &y in &[1e-4_f64, 0.01, 0.5, 1.0, 10.0, 25.0, 80.0] {
            let x = inverse_softplus(y);
            assert!((softplus(x) - y).abs() <= 1e-12 * y.max(1.0), "y={y}");
        }
    }

    #[test]
    fn sigmoid_logit_roundtrip() {
        for &p in &[0.01_f64, 0.25, 0.5, 0.9] {
            assert!((sigmoid(logit(p)) - p).abs() < 1e-14);
        }
        assert_eq!(sigmoid(0.0_f32), 0.5);
    }

    #[test]
    fn softplus_large_inputs_are_finite() {
        assert!(softplus(1000.0_f64).is_finite());
        assert!(softplus(-1000.0_f64) >= 0.0);
        assert_eq!(softplus(0.0_f64), std::f64::consts::LN_2);
    }
}
