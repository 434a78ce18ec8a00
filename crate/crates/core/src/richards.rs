//! Richards (generalized logistic) growth curves and their weekly increments.
//!
//! With `x = h (p - t)` the cumulative curve is `b + r (1 + e^x)^{-s}`. Every
//! power of `1 + e^x` is evaluated as `exp(-s * softplus(x))` so that large
//! `|x|` underflows cleanly instead of producing `inf / inf`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{log_add_exp, Real};

/// Number of curve parameters.
pub const N_CURVE_PARAMS: usize = 5;

/// Names of the curve parameters in storage order.
pub const CURVE_PARAM_NAMES: [&str; N_CURVE_PARAMS] = ["b", "r", "h", "p", "s"];

/// Curve parameter block `(b, r, h, p, s)`.
///
/// `b` is the baseline (endemic) rate, `r` the outbreak size, `h` the growth
/// rate per week, `p` the lag phase in weeks and `s` the asymmetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RichardsParams<T> {
    pub b: T,
    pub r: T,
    pub h: T,
    pub p: T,
    pub s: T,
}

/// Which weekly-increment formula drives the expected count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendFormula {
    /// Exact first difference of the linear-baseline curve.
    ExactDiff,
    /// Derivative of the curve times a unit time step.
    #[default]
    Linearized,
}

impl<T: Real> RichardsParams<T> {
    pub fn new(b: T, r: T, h: T, p: T, s: T) -> Result<Self> {
        let params = Self { b, r, h, p, s };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [("b", self.b), ("r", self.r), ("h", self.h), ("s", self.s)];
        for (name, v) in nonneg {
            if !v.is_finite() || v < T::zero() {
                return Err(Error::Domain(format!("curve parameter {name} = {v} must be finite and >= 0")));
            }
        }
        if !self.p.is_finite() {
            return Err(Error::Domain(format!("curve parameter p = {} must be finite", self.p)));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [T; N_CURVE_PARAMS] {
        [self.b, self.r, self.h, self.p, self.s]
    }

    pub fn from_array(a: [T; N_CURVE_PARAMS]) -> Self {
        Self { b: a[0], r: a[1], h: a[2], p: a[3], s: a[4] }
    }

    #[inline]
    fn exponent(&self, t: T) -> T {
        self.h * (self.p - t)
    }

    /// `ln (1 + e^{h(p-t)})^{-s}`.
    #[inline]
    fn ln_shape(&self, t: T) -> T {
        -self.s * self.exponent(t).softplus()
    }

    /// Classic curve `b + r (1 + e^{h(p-t)})^{-s}`.
    pub fn classic(&self, t: T) -> T {
        self.b + self.r * self.ln_shape(t).exp()
    }

    /// Curve with a linear baseline, `b t + r (1 + e^{h(p-t)})^{-s}`.
    pub fn linear_baseline(&self, t: T) -> T {
        self.b * t + self.r * self.ln_shape(t).exp()
    }

    /// Exact weekly increment `Λ(t) - Λ(t-1)` of [`Self::linear_baseline`].
    pub fn diff(&self, t: i64) -> T {
        let t = T::from_i64(t).expect("week index representable");
        self.b + self.r * self.shape_increment(t)
    }

    /// `(1 + e^{x_0})^{-s} - (1 + e^{x_1})^{-s}` with `x_1 = x_0 + h`, evaluated
    /// as `F_0 (1 - e^{ln F_1 - ln F_0})`.
    fn shape_increment(&self, t: T) -> T {
        let ln_f0 = self.ln_shape(t);
        let ln_f1 = self.ln_shape(t - T::one());
        if ln_f1 <= ln_f0 {
            -ln_f0.exp() * (ln_f1 - ln_f0).exp_m1()
        } else {
            // h = 0 exactly or negative inputs: plain subtraction keeps the sign.
            ln_f0.exp() - ln_f1.exp()
        }
    }

    /// Derivative approximation `b + r s h e^x (1 + e^x)^{-(s+1)}`, unit step.
    pub fn deriv_approx(&self, t: T) -> T {
        self.b + self.r * self.s * self.h * self.pulse(self.exponent(t))
    }

    /// `e^x (1 + e^x)^{-(s+1)}`, rewritten for positive `x` as
    /// `e^{-s x} (1 + e^{-x})^{-(s+1)}`.
    fn pulse(&self, x: T) -> T {
        let one = T::one();
        let s1 = self.s + one;
        if x <= T::zero() {
            let e = x.exp();
            e * (one + e).powf(-s1)
        } else {
            (-self.s * x).exp() * (one + (-x).exp()).powf(-s1)
        }
    }

    /// Weekly expected increment under the chosen formula.
    pub fn trend(&self, formula: TrendFormula, t: i64) -> T {
        match formula {
            TrendFormula::ExactDiff => self.diff(t),
            TrendFormula::Linearized => {
                self.deriv_approx(T::from_i64(t).expect("week index representable"))
            }
        }
    }

    /// `ln λ(t)` and its gradient with respect to the unconstrained curve
    /// coordinates `(ln b, ln r, ln h, p, ln s)`.
    ///
    /// Requires `b, r, h, s > 0`.
    pub fn ln_trend_grad(&self, formula: TrendFormula, t: i64) -> (T, [T; N_CURVE_PARAMS]) {
        let t = T::from_i64(t).expect("week index representable");
        match formula {
            TrendFormula::Linearized => self.ln_linearized_grad(t),
            TrendFormula::ExactDiff => self.ln_exact_grad(t),
        }
    }

    fn ln_linearized_grad(&self, t: T) -> (T, [T; N_CURVE_PARAMS]) {
        let one = T::one();
        let x = self.exponent(t);
        let sp = x.softplus();
        let sig = x.sigmoid();
        let s1 = self.s + one;
        let ln_pulse = self.r.ln() + self.s.ln() + self.h.ln() + x - s1 * sp;
        let ln_b = self.b.ln();
        let ln_lambda = log_add_exp(ln_b, ln_pulse);
        let w_b = (ln_b - ln_lambda).exp();
        let w_pulse = (ln_pulse - ln_lambda).exp();
        let dx = one - s1 * sig;
        let grad = [
            w_b,
            w_pulse,
            w_pulse * (one + x * dx),
            w_pulse * self.h * dx,
            w_pulse * (one - self.s * sp),
        ];
        (ln_lambda, grad)
    }

    fn ln_exact_grad(&self, t: T) -> (T, [T; N_CURVE_PARAMS]) {
        let x0 = self.exponent(t);
        let x1 = x0 + self.h;
        let f0 = (-self.s * x0.softplus()).exp();
        let f1 = (-self.s * x1.softplus()).exp();
        let lambda = self.b + self.r * self.shape_increment(t);
        // dF/dx = -s σ(x) F and dF/d ln s = -s softplus(x) F
        let dfdx0 = -self.s * x0.sigmoid() * f0;
        let dfdx1 = -self.s * x1.sigmoid() * f1;
        let dfds0 = -self.s * x0.softplus() * f0;
        let dfds1 = -self.s * x1.softplus() * f1;
        let inc = lambda - self.b;
        let grad = [
            self.b / lambda,
            inc / lambda,
            self.r * (dfdx0 * x0 - dfdx1 * x1) / lambda,
            self.r * self.h * (dfdx0 - dfdx1) / lambda,
            self.r * (dfds0 - dfds1) / lambda,
        ];
        (lambda.ln(), grad)
    }
}
