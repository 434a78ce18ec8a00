//! One NUTS transition with a diagonal Euclidean metric.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{LogDensity, SamplingVariant};
use crate::scalar::log_add_exp;

/// Position, momentum, and cached density of a phase-space point.
#[derive(Debug, Clone)]
pub(crate) struct Point {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub log_density: f64,
}

impl Point {
    pub fn new<D: LogDensity + ?Sized>(target: &D, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let log_density = target.log_density_grad(&q, &mut grad);
        Self { p: vec![0.0; q.len()], q, grad, log_density }
    }
}

/// Hamiltonian system `H = -ln π(q) + ½ pᵀ M⁻¹ p`.
pub(crate) struct Hamiltonian<'a, D: ?Sized> {
    pub target: &'a D,
    pub inv_mass: &'a [f64],
}

impl<D: LogDensity + ?Sized> Hamiltonian<'_, D> {
    pub fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(self.inv_mass).map(|(p, m)| m * p * p).sum::<f64>()
    }

    pub fn energy(&self, z: &Point) -> f64 {
        let h = -z.log_density + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    /// `M⁻¹ p`, the velocity.
    pub fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(self.inv_mass).map(|(p, m)| m * p).collect()
    }

    pub fn sample_momentum<R: Rng + ?Sized>(&self, z: &mut Point, rng: &mut R) {
        for (p, m) in z.p.iter_mut().zip(self.inv_mass) {
            let n: f64 = rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }

    pub fn leapfrog(&self, z: &mut Point, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(self.inv_mass) {
            *q += eps * m * p;
        }
        z.log_density = self.target.log_density_grad(&z.q, &mut z.grad);
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

fn no_u_turn(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

/// Per-transition statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub energy: f64,
    pub step_size: f64,
}

struct TreeBuilder<'a, 'b, D: ?Sized, R: ?Sized> {
    ham: &'b Hamiltonian<'a, D>,
    rng: &'b mut R,
    eps: f64,
    h0: f64,
    variant: SamplingVariant,
    /// Slice level `ln u` for the slice variant.
    log_slice: f64,
    threshold: f64,
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

/// Edge momenta of a (sub)tree.
struct Edges {
    p_sharp_beg: Vec<f64>,
    p_sharp_end: Vec<f64>,
    p_beg: Vec<f64>,
    p_end: Vec<f64>,
}

impl<D: LogDensity + ?Sized, R: Rng + ?Sized> TreeBuilder<'_, '_, D, R> {
    fn leaf_log_weight(&self, h: f64) -> f64 {
        match self.variant {
            SamplingVariant::Multinomial => self.h0 - h,
            SamplingVariant::Slice => {
                if -h >= self.log_slice {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// Extends `z` by `2^depth` leapfrog steps in direction `sign`, keeping a
    /// proposal in `z_propose`. Returns false on divergence or a U-turn
    /// inside the new subtree.
    #[allow(clippy::too_many_arguments)]
    fn build(
        &mut self,
        depth: usize,
        sign: f64,
        z: &mut Point,
        z_propose: &mut Point,
        edges: &mut Edges,
        rho: &mut [f64],
        log_sum_weight: &mut f64,
    ) -> bool {
        if depth == 0 {
            self.ham.leapfrog(z, sign * self.eps);
            self.n_leapfrog += 1;
            let h = self.ham.energy(z);
            let diverged = match self.variant {
                SamplingVariant::Multinomial => h - self.h0 > self.threshold,
                SamplingVariant::Slice => self.log_slice - self.threshold > -h,
            };
            if diverged || !h.is_finite() {
                self.divergent = true;
                return false;
            }
            *log_sum_weight = log_add_exp(*log_sum_weight, self.leaf_log_weight(h));
            self.sum_metro_prob += (self.h0 - h).exp().min(1.0);
            z_propose.clone_from(z);
            let ps = self.ham.p_sharp(&z.p);
            edges.p_sharp_beg.clone_from(&ps);
            edges.p_sharp_end = ps;
            add_into(rho, &z.p);
            edges.p_beg.clone_from(&z.p);
            edges.p_end.clone_from(&z.p);
            return true;
        }
        let dim = z.q.len();
        let mut init = Edges {
            p_sharp_beg: std::mem::take(&mut edges.p_sharp_beg),
            p_sharp_end: vec![0.0; dim],
            p_beg: std::mem::take(&mut edges.p_beg),
            p_end: vec![0.0; dim],
        };
        let mut rho_init = vec![0.0; dim];
        let mut lsw_init = f64::NEG_INFINITY;
        let ok = self.build(depth - 1, sign, z, z_propose, &mut init, &mut rho_init, &mut lsw_init);
        edges.p_sharp_beg = init.p_sharp_beg;
        edges.p_beg = init.p_beg;
        if !ok {
            return false;
        }
        let mut z_propose_final = z.clone();
        let mut fin = Edges {
            p_sharp_beg: vec![0.0; dim],
            p_sharp_end: std::mem::take(&mut edges.p_sharp_end),
            p_beg: vec![0.0; dim],
            p_end: std::mem::take(&mut edges.p_end),
        };
        let mut rho_final = vec![0.0; dim];
        let mut lsw_final = f64::NEG_INFINITY;
        let ok = self.build(depth - 1, sign, z, &mut z_propose_final, &mut fin, &mut rho_final, &mut lsw_final);
        edges.p_sharp_end = std::mem::take(&mut fin.p_sharp_end);
        edges.p_end = std::mem::take(&mut fin.p_end);
        if !ok {
            return false;
        }
        let lsw_subtree = log_add_exp(lsw_init, lsw_final);
        *log_sum_weight = log_add_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree {
            std::mem::swap(z_propose, &mut z_propose_final);
        } else if lsw_final > f64::NEG_INFINITY {
            let accept = (lsw_final - lsw_subtree).exp();
            if self.rng.random::<f64>() < accept {
                std::mem::swap(z_propose, &mut z_propose_final);
            }
        }
        let mut rho_subtree = rho_init.clone();
        add_into(&mut rho_subtree, &rho_final);
        add_into(rho, &rho_subtree);
        let mut persist = no_u_turn(&edges.p_sharp_beg, &edges.p_sharp_end, &rho_subtree);
        let mut rho_ext = rho_init;
        add_into(&mut rho_ext, &fin.p_beg);
        persist &= no_u_turn(&edges.p_sharp_beg, &fin.p_sharp_beg, &rho_ext);
        let mut rho_ext = rho_final;
        add_into(&mut rho_ext, &init.p_end);
        persist &= no_u_turn(&init.p_sharp_end, &edges.p_sharp_end, &rho_ext);
        persist
    }
}

/// Draws a new position from `z` (updated in place).
#[allow(clippy::too_many_arguments)]
pub(crate) fn transition<D: LogDensity + ?Sized, R: Rng + ?Sized>(
    ham: &Hamiltonian<'_, D>,
    z: &mut Point,
    eps: f64,
    max_depth: usize,
    threshold: f64,
    variant: SamplingVariant,
    rng: &mut R,
) -> TransitionStats {
    ham.sample_momentum(z, rng);
    let h0 = ham.energy(z);
    let log_slice = match variant {
        SamplingVariant::Multinomial => 0.0,
        SamplingVariant::Slice => -h0 + rng.random::<f64>().ln(),
    };
    let mut builder = TreeBuilder {
        ham,
        rng,
        eps,
        h0,
        variant,
        log_slice,
        threshold,
        n_leapfrog: 0,
        sum_metro_prob: 0.0,
        divergent: false,
    };
    let ps0 = ham.p_sharp(&z.p);
    let mut z_fwd = z.clone();
    let mut z_bck = z.clone();
    let mut z_sample = z.clone();
    let mut z_propose = z.clone();
    // [beg, end] edges of the forward and backward halves, in trajectory order
    let mut fwd = Edges { p_sharp_beg: ps0.clone(), p_sharp_end: ps0.clone(), p_beg: z.p.clone(), p_end: z.p.clone() };
    let mut bck = Edges { p_sharp_beg: ps0.clone(), p_sharp_end: ps0, p_beg: z.p.clone(), p_end: z.p.clone() };
    let mut rho = z.p.clone();
    let mut log_sum_weight = 0.0;
    let mut depth = 0;
    let dim = z.q.len();

    while depth < max_depth {
        let mut rho_fwd = vec![0.0; dim];
        let mut rho_bck = vec![0.0; dim];
        let mut lsw_subtree = f64::NEG_INFINITY;
        let valid = if builder.rng.random::<f64>() > 0.5 {
            rho_bck.clone_from(&rho);
            // the old trajectory becomes the backward half
            bck.p_end.clone_from(&fwd.p_end);
            bck.p_sharp_end.clone_from(&fwd.p_sharp_end);
            let mut edges = Edges {
                p_sharp_beg: std::mem::take(&mut fwd.p_sharp_beg),
                p_sharp_end: std::mem::take(&mut fwd.p_sharp_end),
                p_beg: std::mem::take(&mut fwd.p_beg),
                p_end: std::mem::take(&mut fwd.p_end),
            };
            let ok = builder.build(depth, 1.0, &mut z_fwd, &mut z_propose, &mut edges, &mut rho_fwd, &mut lsw_subtree);
            fwd = edges;
            ok
        } else {
            rho_fwd.clone_from(&rho);
            fwd.p_beg.clone_from(&bck.p_beg);
            fwd.p_sharp_beg.clone_from(&bck.p_sharp_beg);
            // the backward half is built outward, so its "beg" edge is the far end
            let mut edges = Edges {
                p_sharp_beg: std::mem::take(&mut bck.p_sharp_end),
                p_sharp_end: std::mem::take(&mut bck.p_sharp_beg),
                p_beg: std::mem::take(&mut bck.p_end),
                p_end: std::mem::take(&mut bck.p_beg),
            };
            let ok = builder.build(depth, -1.0, &mut z_bck, &mut z_propose, &mut edges, &mut rho_bck, &mut lsw_subtree);
            bck = Edges { p_sharp_beg: edges.p_sharp_end, p_sharp_end: edges.p_sharp_beg, p_beg: edges.p_end, p_end: edges.p_beg };
            ok
        };
        if !valid {
            break;
        }
        depth += 1;
        if lsw_subtree > log_sum_weight {
            z_sample.clone_from(&z_propose);
        } else if lsw_subtree > f64::NEG_INFINITY {
            let accept = (lsw_subtree - log_sum_weight).exp();
            if builder.rng.random::<f64>() < accept {
                z_sample.clone_from(&z_propose);
            }
        }
        log_sum_weight = log_add_exp(log_sum_weight, lsw_subtree);
        rho = rho_bck.clone();
        add_into(&mut rho, &rho_fwd);
        // bck.p_beg is the backward-most momentum, fwd.p_end the forward-most
        let mut persist = no_u_turn(&bck.p_sharp_beg, &fwd.p_sharp_end, &rho);
        let mut ext = rho_bck;
        add_into(&mut ext, &fwd.p_beg);
        persist &= no_u_turn(&bck.p_sharp_beg, &fwd.p_sharp_beg, &ext);
        let mut ext = rho_fwd;
        add_into(&mut ext, &bck.p_end);
        persist &= no_u_turn(&bck.p_sharp_end, &fwd.p_sharp_end, &ext);
        if !persist {
            break;
        }
    }
    let n_leapfrog = builder.n_leapfrog;
    let accept_stat = if n_leapfrog == 0 { 0.0 } else { builder.sum_metro_prob / n_leapfrog as f64 };
    let divergent = builder.divergent;
    *z = z_sample;
    TransitionStats { accept_stat, tree_depth: depth, n_leapfrog, divergent, energy: ham.energy(z), step_size: eps }
}

/// Step-size heuristic: double or halve `eps` until the one-step
/// acceptance probability crosses 0.8.
pub(crate) fn find_reasonable_step_size<D: LogDensity + ?Sized, R: Rng + ?Sized>(
    ham: &Hamiltonian<'_, D>,
    z: &Point,
    mut eps: f64,
    rng: &mut R,
) -> f64 {
    let mut z0 = z.clone();
    ham.sample_momentum(&mut z0, rng);
    let h0 = ham.energy(&z0);
    let mut trial = z0.clone();
    ham.leapfrog(&mut trial, eps);
    let delta = h0 - ham.energy(&trial);
    let direction = if delta > 0.8f64.ln() { 1 } else { -1 };
    for _ in 0..100 {
        let mut trial = z0.clone();
        ham.sample_momentum(&mut trial, rng);
        let h0 = ham.energy(&trial);
        ham.leapfrog(&mut trial, eps);
        let delta = h0 - ham.energy(&trial);
        if direction == 1 && !(delta > 0.8f64.ln()) {
            break;
        }
        if direction == -1 && !(delta < 0.8f64.ln()) {
            break;
        }
        let next = if direction == 1 { 2.0 * eps } else { 0.5 * eps };
        if !(1e-12..=1e7).contains(&next) {
            break;
        }
        eps = next;
    }
    eps
}
