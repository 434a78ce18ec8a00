//! Scalar abstraction shared by the deterministic model code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the curve, graph and density code is written against.
///
/// Implemented for `f32` and `f64`. The sampler and post-processing work in
/// `f64` only.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `ln(1 + e^x)` without overflow.
    #[inline]
    fn softplus(self) -> Self {
        if self > Self::zero() {
            self + (-self).exp().ln_1p()
        } else {
            self.exp().ln_1p()
        }
    }

    /// Logistic sigmoid `1 / (1 + e^{-x})`.
    #[inline]
    fn sigmoid(self) -> Self {
        let one = Self::one();
        if self >= Self::zero() {
            one / (one + (-self).exp())
        } else {
            let e = self.exp();
            e / (one + e)
        }
    }

    /// `ln(1 - x)`, accurate for small `x`.
    #[inline]
    fn log1m(self) -> Self {
        (-self).ln_1p()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ln(e^a + e^b)`.
pub fn log_add_exp<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln Σ e^{x_i}` over a slice; `-inf` for an empty slice.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() || !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_eq!(800.0f64.softplus(), 800.0);
        assert!(((-800.0f64).softplus()) >= 0.0);
        assert!((0.0f64.softplus() - 2.0f64.ln()).abs() < 1e-15);
        assert!(100.0f32.softplus().is_finite());
    }

    #[test]
    fn sigmoid_symmetry() {
        for &x in &[-30.0, -1.0, 0.0, 0.5, 40.0] {
            let s: f64 = Real::sigmoid(x);
            let t: f64 = Real::sigmoid(-x);
            assert!((s + t - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn log_sum_exp_matches_naive() {
        let xs = [0.1f64, -2.0, 3.5];
        let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - naive).abs() < 1e-14);
        assert!((log_add_exp(1.0f64, 2.0) - (1f64.exp() + 2f64.exp()).ln()).abs() < 1e-14);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
    }
}
