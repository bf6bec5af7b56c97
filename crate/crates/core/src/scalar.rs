//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01, StandardNormal};

/// Floating point type the model, prior and sampler math is written against.
///
/// Implemented for `f32` and `f64`. Random variate generation is part of the
/// trait so generic code does not need to repeat `rand_distr` bounds.
pub trait Scalar:
    Float
    + FloatConst
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
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    fn lit(x: f64) -> Self;

    /// Lossy conversion to `f64`, used for special functions and output.
    fn as_f64(self) -> f64;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform draw on the open interval (0, 1).
    fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Gamma variate with the given shape and *rate*.
    fn gamma_rate<R: Rng + ?Sized>(shape: Self, rate: Self, rng: &mut R) -> Self;

    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            #[inline]
            fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                Open01.sample(rng)
            }

            fn gamma_rate<R: Rng + ?Sized>(shape: Self, rate: Self, rng: &mut R) -> Self {
                Gamma::new(shape, 1.0 / rate)
                    .expect("gamma shape and rate must be positive")
                    .sample(rng)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// log(1 - exp(-x)) for x >= 0, accurate at both ends of the range.
pub fn log1m_exp_neg<T: Scalar>(x: T) -> T {
    if x <= T::zero() {
        return T::neg_infinity();
    }
    if x < T::LN_2() {
        (-(-x).exp_m1()).ln()
    } else {
        (-(-x).exp()).ln_1p()
    }
}

/// Natural log of the gamma function, evaluated in `f64`.
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    T::lit(statrs::function::gamma::ln_gamma(x.as_f64()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log1m_exp_neg_matches_naive_in_the_middle() {
        for &x in &[0.01_f64, 0.3, 0.69, 0.7, 1.0, 5.0] {
            let naive = (1.0 - (-x).exp()).ln();
            assert!((log1m_exp_neg(x) - naive).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn log1m_exp_neg_tails() {
        assert_eq!(log1m_exp_neg(0.0_f64), f64::NEG_INFINITY);
        // tiny x: log(x) dominates
        assert!((log1m_exp_neg(1e-300_f64) - (1e-300_f64).ln()).abs() < 1e-9);
        // large x: -exp(-x)
        let v = log1m_exp_neg(50.0_f64);
        assert!((v + (-50.0_f64).exp()).abs() < 1e-30);
    }

    #[test]
    fn f32_and_f64_agree() {
        let a = log1m_exp_neg(1.5_f32) as f64;
        let b = log1m_exp_neg(1.5_f64);
        assert!((a - b).abs() < 1e-6);
    }
}
