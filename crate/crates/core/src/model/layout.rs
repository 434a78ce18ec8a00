use rand::Rng;

use super::{ModelSpec, ParamBlock, TrendMode};
use crate::error::{Error, Result};
use crate::gmrf::{CarArParams, CarArState};
use crate::richards::{RichardsParams, CURVE_PARAM_NAMES, N_CURVE_PARAMS};
use crate::scalar::Real;

/// Position of every parameter in the flat unconstrained vector.
///
/// Order: curve blocks `(ln b, ln r, ln h, p, ln s)` per curve, regression
/// coefficients, `logit α` (only when the graph has edges), `logit((1+ρ)/2)`,
/// `ln τ`, then the random effects week by week (`φ[t·G + g]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    n_curves: usize,
    n_covariates: usize,
    n_regions: usize,
    n_times: usize,
    has_alpha: bool,
    p_mean: f64,
    regional: bool,
}

impl Layout {
    /// `has_alpha` is false for graphs without edges, where `α` has no effect
    /// on the density and is fixed at 0.
    pub fn new(spec: &ModelSpec, has_alpha: bool) -> Self {
        Self {
            n_curves: spec.n_curves(),
            n_covariates: spec.n_covariates,
            n_regions: spec.n_regions,
            n_times: spec.n_times,
            has_alpha,
            p_mean: spec.priors.p_mean_for(spec.n_times),
            regional: spec.trend_mode == TrendMode::Regional,
        }
    }

    pub fn dim(&self) -> usize {
        self.phi_start() + self.n_regions * self.n_times
    }

    pub fn has_alpha(&self) -> bool {
        self.has_alpha
    }

    pub fn n_curves(&self) -> usize {
        self.n_curves
    }

    #[inline]
    pub fn curve_start(&self, c: usize) -> usize {
        c * N_CURVE_PARAMS
    }

    #[inline]
    pub fn beta_start(&self) -> usize {
        self.n_curves * N_CURVE_PARAMS
    }

    #[inline]
    pub fn alpha_index(&self) -> Option<usize> {
        self.has_alpha.then(|| self.beta_start() + self.n_covariates)
    }

    #[inline]
    pub fn rho_index(&self) -> usize {
        self.beta_start() + self.n_covariates + usize::from(self.has_alpha)
    }

    #[inline]
    pub fn tau_index(&self) -> usize {
        self.rho_index() + 1
    }

    #[inline]
    pub fn phi_start(&self) -> usize {
        self.tau_index() + 1
    }

    #[inline]
    pub fn phi_index(&self, g: usize, t: usize) -> usize {
        self.phi_start() + t * self.n_regions + g
    }

    /// Parameter names in flat-vector order, 1-based where indexed.
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for c in 0..self.n_curves {
            for n in CURVE_PARAM_NAMES {
                names.push(if self.regional { format!("{n}[{}]", c + 1) } else { n.to_string() });
            }
        }
        for k in 0..self.n_covariates {
            names.push(format!("beta[{}]", k + 1));
        }
        if self.has_alpha {
            names.push("alpha".into());
        }
        names.push("rho".into());
        names.push("tau".into());
        for t in 0..self.n_times {
            for g in 0..self.n_regions {
                names.push(format!("phi[{},{}]", g + 1, t + 1));
            }
        }
        names
    }

    /// Flat unconstrained vector for a parameter block.
    pub fn to_unconstrained<T: Real>(&self, params: &ParamBlock<T>) -> Result<Vec<T>> {
        if params.gamma.len() != self.n_curves
            || params.beta.len() != self.n_covariates
            || params.car.phi.len() != self.n_times
            || params.car.phi.iter().any(|v| v.len() != self.n_regions)
        {
            return Err(Error::Domain("parameter block does not match the model layout".into()));
        }
        let mut x = Vec::with_capacity(self.dim());
        for c in &params.gamma {
            x.extend([c.b.ln(), c.r.ln(), c.h.ln(), c.p, c.s.ln()]);
        }
        x.extend(params.beta.iter().copied());
        let CarArParams { alpha, rho, tau } = params.car.params;
        if self.has_alpha {
            x.push((alpha / (T::one() - alpha)).ln());
        }
        x.push(((T::one() + rho) / (T::one() - rho)).ln());
        x.push(tau.ln());
        for row in &params.car.phi {
            x.extend(row.iter().copied());
        }
        if let Some(bad) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "parameter {} has no finite unconstrained value",
                self.names()[bad]
            )));
        }
        Ok(x)
    }

    /// Parameter block for a flat vector, plus `ln |det J|` of the map.
    pub fn to_constrained<T: Real>(&self, x: &[T]) -> Result<(ParamBlock<T>, T)> {
        if x.len() != self.dim() {
            return Err(Error::Domain(format!("expected {} coordinates, got {}", self.dim(), x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("unconstrained vector has non-finite entries".into()));
        }
        let mut log_jac = T::zero();
        let mut gamma = Vec::with_capacity(self.n_curves);
        for c in 0..self.n_curves {
            let u = &x[self.curve_start(c)..self.curve_start(c) + N_CURVE_PARAMS];
            log_jac += u[0] + u[1] + u[2] + u[4];
            gamma.push(RichardsParams { b: u[0].exp(), r: u[1].exp(), h: u[2].exp(), p: u[3], s: u[4].exp() });
        }
        let beta = x[self.beta_start()..self.beta_start() + self.n_covariates].to_vec();
        let alpha = match self.alpha_index() {
            Some(i) => {
                log_jac += -(-x[i]).softplus() - x[i].softplus();
                x[i].sigmoid()
            }
            None => T::zero(),
        };
        let u_rho = x[self.rho_index()];
        log_jac += T::LN_2() - (-u_rho).softplus() - u_rho.softplus();
        let rho = (u_rho * T::lit(0.5)).tanh();
        let u_tau = x[self.tau_index()];
        log_jac += u_tau;
        let tau = u_tau.exp();
        let phi = (0..self.n_times)
            .map(|t| x[self.phi_index(0, t)..self.phi_index(0, t) + self.n_regions].to_vec())
            .collect();
        let params = ParamBlock { gamma, beta, car: CarArState { phi, params: CarArParams { alpha, rho, tau } } };
        Ok((params, log_jac))
    }

    /// Natural-scale values in the order of [`Layout::names`].
    pub fn constrained_values<T: Real>(&self, x: &[T]) -> Result<Vec<T>> {
        let (p, _) = self.to_constrained(x)?;
        let mut out = Vec::with_capacity(self.dim());
        for c in &p.gamma {
            out.extend(c.to_array());
        }
        out.extend(p.beta.iter().copied());
        if self.has_alpha {
            out.push(p.car.params.alpha);
        }
        out.push(p.car.params.rho);
        out.push(p.car.params.tau);
        for row in &p.car.phi {
            out.extend(row.iter().copied());
        }
        Ok(out)
    }

    /// Random starting point: every coordinate uniform on `[-2, 2]`, except
    /// each `p` at its prior mean and the random effects at 0.
    pub fn initial_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.dim()).map(|_| rng.random_range(-2.0..=2.0)).collect();
        for c in 0..self.n_curves {
            x[self.curve_start(c) + 3] = self.p_mean;
        }
        for v in &mut x[self.phi_start()..] {
            *v = 0.0;
        }
        x
    }
}
