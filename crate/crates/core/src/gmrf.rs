//! CAR-AR random-effect prior.
//!
//! `φ_1 ~ N(0, (τ Q(α))^{-1})` and `φ_t | φ_{t-1} ~ N(ρ φ_{t-1}, (τ Q(α))^{-1})`
//! with `Q(α) = D − αW`. `τ` is the precision (the reciprocal of the
//! random-effect variance).
//!
//! The sparse density drops the terms `-(G/2) ln 2π + ½ ln det D`, which do
//! not depend on any sampled quantity.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SpatialGraph;
use crate::linalg::{cholesky, ln_det_from_cholesky, solve_upper_transposed};
use crate::scalar::Real;

/// Hyperparameters of the CAR-AR prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarArParams<T> {
    /// Spatial smoothing in `[0, 1)`.
    pub alpha: T,
    /// Temporal autoregression in `(-1, 1)`.
    pub rho: T,
    /// Precision, `1 / σ²`.
    pub tau: T,
}

/// Random effects plus their hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarArState<T> {
    /// `phi[t][g]`, one vector per week.
    pub phi: Vec<Vec<T>>,
    pub params: CarArParams<T>,
}

impl<T: Real> CarArParams<T> {
    pub fn validate(&self, graph: &SpatialGraph<T>) -> Result<()> {
        if !(self.alpha >= T::zero() && self.alpha < T::one()) {
            return Err(Error::Domain(format!("alpha = {} outside [0, 1)", self.alpha)));
        }
        if !(self.rho > -T::one() && self.rho < T::one()) {
            return Err(Error::Domain(format!("rho = {} outside (-1, 1)", self.rho)));
        }
        check_density_args(self.tau, self.alpha, graph)
    }
}

fn check_density_args<T: Real>(tau: T, alpha: T, graph: &SpatialGraph<T>) -> Result<()> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(Error::Domain(format!("tau = {tau} must be positive")));
    }
    if !alpha.is_finite() || graph.spectrum().iter().any(|&l| !(T::one() - alpha * l > T::zero())) {
        return Err(Error::Domain(format!(
            "alpha = {alpha} makes D - alpha W singular (alpha * max eigenvalue = {})",
            alpha * graph.max_eigenvalue()
        )));
    }
    Ok(())
}

/// `Σ_i ln(1 − α λ_i)`.
pub fn ln_det_ratio<T: Real>(alpha: T, graph: &SpatialGraph<T>) -> T {
    graph.spectrum().iter().map(|&l| (alpha * l).log1m()).sum()
}

/// `d/dα Σ_i ln(1 − α λ_i) = Σ_i −λ_i / (1 − α λ_i)`.
pub fn ln_det_ratio_grad<T: Real>(alpha: T, graph: &SpatialGraph<T>) -> T {
    graph.spectrum().iter().map(|&l| -l / (T::one() - alpha * l)).sum()
}

/// Log-density of one CAR-AR step, up to the constant described in the
/// module docs.
pub fn sparse_carar_lpdf<T: Real>(
    phi: &[T],
    phi_prev: &[T],
    rho: T,
    tau: T,
    alpha: T,
    graph: &SpatialGraph<T>,
) -> Result<T> {
    check_density_args(tau, alpha, graph)?;
    let n = graph.n_regions();
    check_len(phi, n)?;
    check_len(phi_prev, n)?;
    let innov: Vec<T> = phi.iter().zip(phi_prev).map(|(&a, &b)| a - rho * b).collect();
    let (quad_d, quad_w) = quadratic_parts(&innov, graph);
    let g = T::from_usize(n).expect("region count representable");
    Ok(T::lit(0.5) * (g * tau.ln() + ln_det_ratio(alpha, graph) - tau * (quad_d - alpha * quad_w)))
}

fn check_len<T>(v: &[T], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Domain(format!("random-effect vector has length {}, graph has {n} regions", v.len())));
    }
    Ok(())
}

/// `(xᵀ D x, xᵀ W x)`, with the `W` term accumulated edge by edge.
fn quadratic_parts<T: Real>(x: &[T], graph: &SpatialGraph<T>) -> (T, T) {
    let quad_d = x.iter().zip(graph.degrees()).map(|(&v, &d)| d * v * v).sum();
    let mut quad_w = T::zero();
    for e in graph.edges() {
        quad_w += T::lit(2.0) * e.weight * x[e.i] * x[e.j];
    }
    (quad_d, quad_w)
}

/// Gradient of [`sparse_carar_lpdf`].
#[derive(Debug, Clone, PartialEq)]
pub struct CarArGrad<T> {
    pub phi: Vec<T>,
    pub phi_prev: Vec<T>,
    pub rho: T,
    pub tau: T,
    pub alpha: T,
}

/// Value and gradient of one CAR-AR step.
pub fn sparse_carar_lpdf_grad<T: Real>(
    phi: &[T],
    phi_prev: &[T],
    rho: T,
    tau: T,
    alpha: T,
    graph: &SpatialGraph<T>,
) -> Result<(T, CarArGrad<T>)> {
    let value = sparse_carar_lpdf(phi, phi_prev, rho, tau, alpha, graph)?;
    let n = graph.n_regions();
    let innov: Vec<T> = phi.iter().zip(phi_prev).map(|(&a, &b)| a - rho * b).collect();
    let mut w_innov = vec![T::zero(); n];
    graph.mul_adjacency(&innov, &mut w_innov);
    // Q x = D x − α W x
    let q_innov: Vec<T> =
        (0..n).map(|i| graph.degrees()[i] * innov[i] - alpha * w_innov[i]).collect();
    let quad_w: T = innov.iter().zip(&w_innov).map(|(&a, &b)| a * b).sum();
    let quad: T = innov.iter().zip(&q_innov).map(|(&a, &b)| a * b).sum();
    let g = T::from_usize(n).expect("region count representable");
    let half = T::lit(0.5);
    let grad = CarArGrad {
        phi: q_innov.iter().map(|&v| -tau * v).collect(),
        phi_prev: q_innov.iter().map(|&v| rho * tau * v).collect(),
        rho: tau * phi_prev.iter().zip(&q_innov).map(|(&a, &b)| a * b).sum::<T>(),
        tau: half * (g / tau - quad),
        alpha: half * (ln_det_ratio_grad(alpha, graph) + tau * quad_w),
    };
    Ok((value, grad))
}

/// Exact multivariate normal log-density of `φ` given mean `ρ φ_prev` and
/// covariance `(τ Q(α))^{-1}`, built from a dense Cholesky factor of `τ Q`.
///
/// Intended for validation at small `G`.
pub fn dense_carar_lpdf_oracle<T: Real>(
    phi: &[T],
    phi_prev: &[T],
    rho: T,
    tau: T,
    alpha: T,
    graph: &SpatialGraph<T>,
) -> Result<T> {
    let n = graph.n_regions();
    check_len(phi, n)?;
    check_len(phi_prev, n)?;
    if !(tau > T::zero()) {
        return Err(Error::Domain(format!("tau = {tau} must be positive")));
    }
    let mut prec = graph.precision(alpha);
    for i in 0..n {
        for j in 0..n {
            prec[(i, j)] *= tau;
        }
    }
    let l = cholesky(&prec)?;
    let x: Vec<T> = phi.iter().zip(phi_prev).map(|(&a, &b)| a - rho * b).collect();
    let qx = prec.mul_vec(&x);
    let quad: T = x.iter().zip(&qx).map(|(&a, &b)| a * b).sum();
    let g = T::from_usize(n).expect("region count representable");
    let half = T::lit(0.5);
    Ok(-half * g * (T::lit(2.0) * T::PI()).ln() + half * ln_det_from_cholesky(&l) - half * quad)
}

/// Constant `(G/2) ln 2π − ½ ln det D` separating the sparse density from the
/// exact one.
pub fn sparse_dense_offset<T: Real>(graph: &SpatialGraph<T>) -> T {
    let g = T::from_usize(graph.n_regions()).expect("region count representable");
    let half = T::lit(0.5);
    half * g * (T::lit(2.0) * T::PI()).ln() - half * graph.ln_det_degrees()
}

/// Log-density of the whole CAR-AR stack plus its gradient.
///
/// `phi` holds `n_times` consecutive blocks of `G` values; `grad_phi` receives
/// the matching gradient (overwritten). Returns the value and the gradient
/// with respect to `(alpha, rho, tau)`.
pub fn carar_stack_lpdf_grad<T: Real>(
    phi: &[T],
    params: &CarArParams<T>,
    graph: &SpatialGraph<T>,
    grad_phi: &mut [T],
    scratch: &mut Vec<T>,
) -> Result<(T, [T; 3])> {
    let CarArParams { alpha, rho, tau } = *params;
    check_density_args(tau, alpha, graph)?;
    let n = graph.n_regions();
    if n == 0 || phi.len() % n != 0 || grad_phi.len() != phi.len() {
        return Err(Error::Domain("random-effect stack has wrong length".into()));
    }
    let n_times = phi.len() / n;
    let degrees = graph.degrees();
    scratch.clear();
    scratch.resize(2 * n, T::zero());
    let (innov, q_innov) = scratch.split_at_mut(n);

    grad_phi.iter_mut().for_each(|v| *v = T::zero());
    let mut total_quad = T::zero();
    let mut total_quad_w = T::zero();
    let mut d_rho = T::zero();
    for t in 0..n_times {
        let cur = &phi[t * n..(t + 1) * n];
        if t == 0 {
            innov.copy_from_slice(cur);
        } else {
            let prev = &phi[(t - 1) * n..t * n];
            for i in 0..n {
                innov[i] = cur[i] - rho * prev[i];
            }
        }
        for i in 0..n {
            q_innov[i] = T::zero();
        }
        for e in graph.edges() {
            q_innov[e.i] += e.weight * innov[e.j];
            q_innov[e.j] += e.weight * innov[e.i];
        }
        let mut quad_w = T::zero();
        let mut quad = T::zero();
        for i in 0..n {
            let w = q_innov[i];
            quad_w += innov[i] * w;
            let qv = degrees[i] * innov[i] - alpha * w;
            q_innov[i] = qv;
            quad += innov[i] * qv;
        }
        total_quad += quad;
        total_quad_w += quad_w;
        for i in 0..n {
            grad_phi[t * n + i] -= tau * q_innov[i];
        }
        if t > 0 {
            let prev = &phi[(t - 1) * n..t * n];
            for i in 0..n {
                grad_phi[(t - 1) * n + i] += rho * tau * q_innov[i];
                d_rho += tau * prev[i] * q_innov[i];
            }
        }
    }
    let half = T::lit(0.5);
    let steps = T::from_usize(n_times).expect("time count representable");
    let g = T::from_usize(n).expect("region count representable");
    let value = half * (steps * (g * tau.ln() + ln_det_ratio(alpha, graph)) - tau * total_quad);
    let d_alpha = half * (steps * ln_det_ratio_grad(alpha, graph) + tau * total_quad_w);
    let d_tau = half * (steps * g / tau - total_quad);
    Ok((value, [d_alpha, d_rho, d_tau]))
}

/// Draws `n_times` random-effect vectors from the CAR-AR prior.
pub fn carar_prior_sample<R: Rng + ?Sized>(
    rng: &mut R,
    params: &CarArParams<f64>,
    graph: &SpatialGraph<f64>,
    n_times: usize,
) -> Result<Vec<Vec<f64>>> {
    params.validate(graph)?;
    let n = graph.n_regions();
    let mut prec = graph.precision(params.alpha);
    for i in 0..n {
        for j in 0..n {
            prec[(i, j)] *= params.tau;
        }
    }
    let l = cholesky(&prec)?;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n_times);
    for t in 0..n_times {
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let noise = solve_upper_transposed(&l, &z);
        let phi = match t {
            0 => noise,
            _ => out[t - 1].iter().zip(&noise).map(|(&p, &e)| params.rho * p + e).collect(),
        };
        out.push(phi);
    }
    Ok(out)
}
