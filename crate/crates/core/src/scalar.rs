//! Numeric abstractions shared by the bound computations and the GCN.
//!
//! [`Probability`] is the minimal field-like interface the interception
//! bounds need. It is implemented for `f32`, `f64` and exact [`BigRational`],
//! so every closed form can be evaluated either in floating point or exactly.
//! [`Scalar`] adds the floating-point surface the neural network needs.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive, Zero};

/// Ordered number type able to represent probabilities.
pub trait Probability:
    Clone + Debug + PartialOrd + num_traits::Num + FromPrimitive + Send + Sync + 'static
{
    fn from_f64_lossy(x: f64) -> Self;

    fn to_f64_lossy(&self) -> f64;

    /// Product of a sequence of factors in `[0, 1]`.
    fn product<I: IntoIterator<Item = Self>>(factors: I) -> Self {
        factors.into_iter().fold(Self::one(), |acc, f| acc * f)
    }

    fn powi(&self, exp: usize) -> Self {
        num_traits::pow::pow(self.clone(), exp)
    }

    fn clamp_unit(self) -> Self {
        if self < Self::zero() {
            Self::zero()
        } else if self > Self::one() {
            Self::one()
        } else {
            self
        }
    }

    fn max_of(a: Self, b: Self) -> Self {
        if b > a {
            b
        } else {
            a
        }
    }
}

/// Factors below this threshold switch float products to log space.
const LOG_SPACE_THRESHOLD: f64 = 1e-12;

macro_rules! float_probability {
    ($($t:ty)*) => ($(
        impl Probability for $t {
            fn from_f64_lossy(x: f64) -> Self {
                x as $t
            }

            fn to_f64_lossy(&self) -> f64 {
                *self as f64
            }

            fn product<I: IntoIterator<Item = Self>>(factors: I) -> Self {
                let factors: Vec<$t> = factors.into_iter().collect();
                if factors.iter().any(|&f| (f as f64) < LOG_SPACE_THRESHOLD) {
                    if factors.iter().any(|&f| f <= 0.0) {
                        return 0.0;
                    }
                    factors.iter().map(|f| f.ln()).sum::<$t>().exp()
                } else {
                    factors.iter().product()
                }
            }

            fn powi(&self, exp: usize) -> Self {
                Float::powi(*self, exp as i32)
            }
        }
    )*)
}

float_probability!(f32 f64);

impl Probability for BigRational {
    fn from_f64_lossy(x: f64) -> Self {
        BigRational::from_float(x).unwrap_or_else(|| BigRational::from_integer(BigInt::zero()))
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Floating-point element type of feature matrices and network weights.
pub trait Scalar:
    Probability
    + Float
    + NumAssign
    + Sum
    + Display
    + Default
    + ScalarOperand
    + LinalgScalar
{
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 converts to scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_space_product_matches_direct() {
        let f = vec![1e-13_f64, 0.5, 0.25];
        let p = <f64 as Probability>::product(f.clone());
        let direct: f64 = f.iter().product();
        assert!((p - direct).abs() <= 1e-12 * direct.abs().max(1e-300));
    }

    #[test]
    fn product_with_zero_factor_is_zero() {
        assert_eq!(<f64 as Probability>::product(vec![0.0, 0.5]), 0.0);
    }

    #[test]
    fn rational_product_is_exact() {
        let half = BigRational::new(1.into(), 2.into());
        let p = BigRational::product(vec![half.clone(), half.clone()]);
        assert_eq!(p, BigRational::new(1.into(), 4.into()));
        assert_eq!(half.powi(3), BigRational::new(1.into(), 8.into()));
    }

    #[test]
    fn clamp_unit_bounds() {
        assert_eq!(1.5_f64.clamp_unit(), 1.0);
        assert_eq!((-0.1_f64).clamp_unit(), 0.0);
    }
}
