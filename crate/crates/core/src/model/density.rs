use statrs::function::gamma::ln_gamma;

use super::{CountPanel, Layout, ModelSpec, ParamBlock};
use crate::error::{Error, Result};
use crate::gmrf::{carar_stack_lpdf_grad, sparse_carar_lpdf};
use crate::graph::SpatialGraph;
use crate::richards::N_CURVE_PARAMS;
use crate::scalar::Real;

fn normal_lpdf<T: Real>(x: T, mean: T, sd: T) -> T {
    let z = (x - mean) / sd;
    -T::lit(0.5) * (z * z + (T::lit(2.0) * T::PI()).ln()) - sd.ln()
}

fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn check_compatible(spec: &ModelSpec, panel: &CountPanel) -> Result<()> {
    if panel.n_regions() != spec.n_regions
        || panel.n_times() != spec.n_times
        || panel.n_covariates() != spec.n_covariates
    {
        return Err(Error::Data(format!(
            "panel is {}x{}x{} but the model expects {}x{}x{}",
            panel.n_regions(),
            panel.n_times(),
            panel.n_covariates(),
            spec.n_regions,
            spec.n_times,
            spec.n_covariates
        )));
    }
    Ok(())
}

/// `ln μ_gt` for one cell.
fn ln_mean<T: Real>(params: &ParamBlock<T>, panel: &CountPanel, spec: &ModelSpec, g: usize, t: usize) -> T {
    let curve = params.curve_for(spec, g);
    let ln_trend = curve.trend(spec.trend_formula, t as i64 + 1).ln();
    let lin: T = panel.covariates[g][t].iter().zip(&params.beta).map(|(&x, &b)| T::lit(x) * b).sum();
    T::lit(panel.offset_log[g]) + params.car.phi[t][g] + ln_trend + lin
}

fn ln_factorial(y: u64) -> f64 {
    if y < 2 {
        0.0
    } else {
        ln_gamma(y as f64 + 1.0)
    }
}

fn poisson_lpmf<T: Real>(y: u64, ln_mu: T) -> Result<T> {
    let mu = ln_mu.exp();
    if y > 0 && mu == T::zero() {
        return Err(Error::Domain(format!("zero expected count with observed count {y}")));
    }
    let y_t = T::from_u64(y).expect("count representable");
    let y_term = if y == 0 { T::zero() } else { y_t * ln_mu };
    Ok(y_term - mu - T::lit(ln_factorial(y)))
}

/// Expected counts `μ[g][t]` for every cell, observed or not.
pub fn expected_counts<T: Real>(params: &ParamBlock<T>, panel: &CountPanel, spec: &ModelSpec) -> Result<Vec<Vec<T>>> {
    check_compatible(spec, panel)?;
    params.validate(spec)?;
    Ok((0..spec.n_regions)
        .map(|g| (0..spec.n_times).map(|t| ln_mean(params, panel, spec, g, t).exp()).collect())
        .collect())
}

/// Poisson log-likelihood summed over the observed cells.
pub fn log_likelihood<T: Real>(params: &ParamBlock<T>, panel: &CountPanel, spec: &ModelSpec) -> Result<T> {
    Ok(pointwise_log_likelihood(params, panel, spec)?.into_iter().sum())
}

/// Per-cell log-likelihood of the observed cells, region-major order.
pub fn pointwise_log_likelihood<T: Real>(
    params: &ParamBlock<T>,
    panel: &CountPanel,
    spec: &ModelSpec,
) -> Result<Vec<T>> {
    check_compatible(spec, panel)?;
    params.validate(spec)?;
    panel
        .observed_cells()
        .map(|(g, t)| poisson_lpmf(panel.counts[g][t], ln_mean(params, panel, spec, g, t)))
        .collect()
}

/// Log prior density of a parameter block on the natural scale.
///
/// `b, r, h, s` are log-normal, `p` normal, `β` normal, `α` beta, `ρ` uniform
/// on `(-1, 1)`, `τ` gamma, and the random effects follow the CAR-AR stack
/// (normalized up to the constant documented in [`crate::gmrf`]).
pub fn log_prior<T: Real>(params: &ParamBlock<T>, spec: &ModelSpec, graph: &SpatialGraph<T>) -> Result<T> {
    params.validate(spec)?;
    if graph.n_regions() != spec.n_regions {
        return Err(Error::Graph(format!(
            "graph has {} regions, model has {}",
            graph.n_regions(),
            spec.n_regions
        )));
    }
    let pr = &spec.priors;
    let car = params.car.params;
    if graph.has_edges() {
        if !(car.alpha > T::zero() && car.alpha < T::one()) {
            return Err(Error::Domain(format!("alpha = {} outside (0, 1)", car.alpha)));
        }
    } else if car.alpha != T::zero() {
        return Err(Error::Domain("alpha must be 0 on a graph without edges".into()));
    }
    if !(car.rho > -T::one() && car.rho < T::one()) {
        return Err(Error::Domain(format!("rho = {} outside (-1, 1)", car.rho)));
    }
    if !(car.tau > T::zero()) {
        return Err(Error::Domain(format!("tau = {} must be positive", car.tau)));
    }
    let zero = T::zero();
    let scale_sd = T::lit(pr.log_scale_sd);
    let rate_sd = T::lit(pr.log_rate_sd);
    let p_mean = T::lit(pr.p_mean_for(spec.n_times));
    let p_sd = T::lit(pr.p_sd_for(spec.n_times));
    let mut lp = zero;
    for c in &params.gamma {
        if !(c.b > zero && c.r > zero && c.h > zero && c.s > zero) {
            return Err(Error::Domain("b, r, h, s must be strictly positive".into()));
        }
        lp += normal_lpdf(c.b.ln(), zero, scale_sd) - c.b.ln();
        lp += normal_lpdf(c.r.ln(), zero, scale_sd) - c.r.ln();
        lp += normal_lpdf(c.h.ln(), zero, rate_sd) - c.h.ln();
        lp += normal_lpdf(c.s.ln(), zero, rate_sd) - c.s.ln();
        lp += normal_lpdf(c.p, p_mean, p_sd);
    }
    for &b in &params.beta {
        lp += normal_lpdf(b, zero, T::lit(pr.beta_sd));
    }
    if graph.has_edges() {
        let (a1, a2) = pr.alpha_shape;
        lp += T::lit(a1 - 1.0) * car.alpha.ln() + T::lit(a2 - 1.0) * (-car.alpha).ln_1p()
            - T::lit(ln_beta_fn(a1, a2));
    }
    lp -= T::LN_2();
    let (shape, rate) = pr.tau_shape_rate;
    lp += T::lit(shape * rate.ln() - ln_gamma(shape)) + T::lit(shape - 1.0) * car.tau.ln() - T::lit(rate) * car.tau;
    let zeros = vec![zero; spec.n_regions];
    for t in 0..spec.n_times {
        let prev = if t == 0 { &zeros } else { &params.car.phi[t - 1] };
        lp += sparse_carar_lpdf(&params.car.phi[t], prev, car.rho, car.tau, car.alpha, graph)?;
    }
    Ok(lp)
}

/// Log posterior on the unconstrained scale with its analytic gradient.
#[derive(Debug, Clone)]
pub struct Posterior<T> {
    spec: ModelSpec,
    layout: Layout,
    graph: SpatialGraph<T>,
    n_times: usize,
    n_cov: usize,
    counts: Vec<T>,
    ln_fact: Vec<T>,
    observed: Vec<bool>,
    offset: Vec<T>,
    covariates: Vec<T>,
}

impl<T: Real> Posterior<T> {
    pub fn new(spec: ModelSpec, graph: SpatialGraph<T>, panel: &CountPanel) -> Result<Self> {
        spec.validate()?;
        panel.validate()?;
        check_compatible(&spec, panel)?;
        if graph.n_regions() != spec.n_regions {
            return Err(Error::Graph(format!(
                "graph has {} regions, panel has {}",
                graph.n_regions(),
                spec.n_regions
            )));
        }
        let layout = Layout::new(&spec, graph.has_edges());
        let mut counts = Vec::new();
        let mut ln_fact = Vec::new();
        let mut observed = Vec::new();
        let mut covariates = Vec::new();
        for (g, t) in panel.cells() {
            let y = panel.counts[g][t];
            counts.push(T::from_u64(y).expect("count representable"));
            ln_fact.push(T::lit(ln_factorial(y)));
            observed.push(panel.observed[g][t]);
            covariates.extend(panel.covariates[g][t].iter().map(|&v| T::lit(v)));
        }
        Ok(Self {
            n_times: spec.n_times,
            n_cov: spec.n_covariates,
            offset: panel.offset_log.iter().map(|&v| T::lit(v)).collect(),
            layout,
            spec,
            graph,
            counts,
            ln_fact,
            observed,
            covariates,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn graph(&self) -> &SpatialGraph<T> {
        &self.graph
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// `ln λ` and its curve-coordinate gradient for every (curve, week).
    fn trend_table(&self, x: &[T]) -> Vec<(T, [T; N_CURVE_PARAMS])> {
        let mut table = Vec::with_capacity(self.layout.n_curves() * self.n_times);
        for c in 0..self.layout.n_curves() {
            let s = self.layout.curve_start(c);
            let curve = crate::richards::RichardsParams {
                b: x[s].exp(),
                r: x[s + 1].exp(),
                h: x[s + 2].exp(),
                p: x[s + 3],
                s: x[s + 4].exp(),
            };
            for t in 0..self.n_times {
                table.push(curve.ln_trend_grad(self.spec.trend_formula, t as i64 + 1));
            }
        }
        table
    }

    #[inline]
    fn cell_ln_mean(&self, x: &[T], trend: &[(T, [T; N_CURVE_PARAMS])], g: usize, t: usize) -> T {
        let cell = g * self.n_times + t;
        let beta = &x[self.layout.beta_start()..self.layout.beta_start() + self.n_cov];
        let cov = &self.covariates[cell * self.n_cov..(cell + 1) * self.n_cov];
        let lin: T = cov.iter().zip(beta).map(|(&a, &b)| a * b).sum();
        let c = self.spec.curve_of(g);
        self.offset[g] + x[self.layout.phi_index(g, t)] + trend[c * self.n_times + t].0 + lin
    }

    /// `ln μ` for every cell, region-major.
    pub fn ln_means(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_len(x)?;
        let trend = self.trend_table(x);
        Ok((0..self.spec.n_regions)
            .flat_map(|g| (0..self.n_times).map(move |t| (g, t)))
            .map(|(g, t)| self.cell_ln_mean(x, &trend, g, t))
            .collect())
    }

    /// Per-cell log-likelihood of the observed cells, region-major.
    pub fn pointwise_log_lik(&self, x: &[T]) -> Result<Vec<T>> {
        let ln_mu = self.ln_means(x)?;
        Ok(ln_mu
            .iter()
            .enumerate()
            .filter(|&(cell, _)| self.observed[cell])
            .map(|(cell, &lm)| self.counts[cell] * lm - lm.exp() - self.ln_fact[cell])
            .collect())
    }

    fn check_len(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Domain(format!("expected {} coordinates, got {}", self.dim(), x.len())));
        }
        Ok(())
    }

    pub fn log_density(&self, x: &[T]) -> Result<T> {
        let mut grad = vec![T::zero(); x.len()];
        self.log_density_grad(x, &mut grad)
    }

    /// Log posterior (likelihood + prior + log-Jacobian) at an unconstrained
    /// point; writes the gradient into `grad`.
    ///
    /// Points the density cannot be evaluated at (overflowing means, a
    /// smoothing parameter that rounded to 1) return `-inf`.
    pub fn log_density_grad(&self, x: &[T], grad: &mut [T]) -> Result<T> {
        self.check_len(x)?;
        if grad.len() != x.len() {
            return Err(Error::Domain("gradient buffer has wrong length".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Ok(T::neg_infinity());
        }
        let lay = &self.layout;
        let pr = &self.spec.priors;
        let zero = T::zero();
        let one = T::one();
        grad.iter_mut().for_each(|v| *v = zero);

        // CAR-AR stack
        let alpha = lay.alpha_index().map_or(zero, |i| x[i].sigmoid());
        let u_rho = x[lay.rho_index()];
        let rho = (u_rho * T::lit(0.5)).tanh();
        let tau = x[lay.tau_index()].exp();
        let car = crate::gmrf::CarArParams { alpha, rho, tau };
        let mut scratch = Vec::new();
        let phi_start = lay.phi_start();
        let (x_head, phi) = x.split_at(phi_start);
        let (grad_head, grad_phi) = grad.split_at_mut(phi_start);
        let (car_lp, [d_alpha, d_rho, d_tau]) =
            match carar_stack_lpdf_grad(phi, &car, &self.graph, grad_phi, &mut scratch) {
                Ok(v) => v,
                Err(_) => return Ok(T::neg_infinity()),
            };
        let mut lp = car_lp;

        // hyperpriors with Jacobians, written directly on the unconstrained scale
        if let Some(i) = lay.alpha_index() {
            let (a1, a2) = pr.alpha_shape;
            let (a1, a2) = (T::lit(a1), T::lit(a2));
            let u = x_head[i];
            lp += -a1 * (-u).softplus() - a2 * u.softplus() - T::lit(ln_beta_fn(pr.alpha_shape.0, pr.alpha_shape.1));
            grad_head[i] = d_alpha * alpha * (one - alpha) + a1 * (one - alpha) - a2 * alpha;
        }
        lp += -(-u_rho).softplus() - u_rho.softplus();
        grad_head[lay.rho_index()] = d_rho * (one - rho * rho) * T::lit(0.5) - rho;
        let (shape, rate) = pr.tau_shape_rate;
        let u_tau = x_head[lay.tau_index()];
        lp += T::lit(shape * rate.ln() - ln_gamma(shape)) + T::lit(shape) * u_tau - T::lit(rate) * tau;
        grad_head[lay.tau_index()] = d_tau * tau + T::lit(shape) - T::lit(rate) * tau;

        // curve priors
        let scale_sd = T::lit(pr.log_scale_sd);
        let rate_sd = T::lit(pr.log_rate_sd);
        let p_mean = T::lit(pr.p_mean_for(self.n_times));
        let p_sd = T::lit(pr.p_sd_for(self.n_times));
        for c in 0..lay.n_curves() {
            let s = lay.curve_start(c);
            let sds = [scale_sd, scale_sd, rate_sd, p_sd, rate_sd];
            let means = [zero, zero, zero, p_mean, zero];
            for k in 0..N_CURVE_PARAMS {
                lp += normal_lpdf(x_head[s + k], means[k], sds[k]);
                grad_head[s + k] = -(x_head[s + k] - means[k]) / (sds[k] * sds[k]);
            }
        }
        let beta_sd = T::lit(pr.beta_sd);
        let b0 = lay.beta_start();
        for k in 0..self.n_cov {
            lp += normal_lpdf(x_head[b0 + k], zero, beta_sd);
            grad_head[b0 + k] = -x_head[b0 + k] / (beta_sd * beta_sd);
        }

        // likelihood
        let trend = self.trend_table(x);
        for g in 0..self.spec.n_regions {
            let c = self.spec.curve_of(g);
            for t in 0..self.n_times {
                let cell = g * self.n_times + t;
                if !self.observed[cell] {
                    continue;
                }
                let ln_mu = self.cell_ln_mean(x, &trend, g, t);
                let mu = ln_mu.exp();
                let y = self.counts[cell];
                lp += y * ln_mu - mu - self.ln_fact[cell];
                let resid = y - mu;
                grad[lay.phi_index(g, t)] += resid;
                let cov = &self.covariates[cell * self.n_cov..(cell + 1) * self.n_cov];
                for (k, &v) in cov.iter().enumerate() {
                    grad[b0 + k] += resid * v;
                }
                let s = lay.curve_start(c);
                let tg = &trend[c * self.n_times + t].1;
                for k in 0..N_CURVE_PARAMS {
                    grad[s + k] += resid * tg[k];
                }
            }
        }
        if !lp.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Ok(T::neg_infinity());
        }
        Ok(lp)
    }
}
