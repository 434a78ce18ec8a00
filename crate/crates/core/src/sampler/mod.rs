//! No-U-Turn sampler with warm-up adaptation and concurrent chains.
//!
//! Chain `c` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `c + 1`,
//! so chains are independent and any chain can be re-run alone. The worker
//! count defaults to the available parallelism and can be capped with the
//! `STRICH_WORKERS` environment variable; results never depend on it.

mod adapt;
mod nuts;

pub use adapt::{DualAveraging, MassAdaptation, Welford};
pub use nuts::TransitionStats;

use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Posterior;
use nuts::{find_reasonable_step_size, transition, Hamiltonian, Point};

/// Unnormalized log density with gradient, on an unconstrained space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density;
    /// `-inf` (or NaN) marks points outside the support.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Starting point for a chain. Defaults to uniform on `[-2, 2]`.
    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.random_range(-2.0..=2.0)).collect()
    }
}

impl LogDensity for Posterior<f64> {
    fn dim(&self) -> usize {
        Posterior::dim(self)
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        Posterior::log_density_grad(self, x, grad).unwrap_or(f64::NEG_INFINITY)
    }

    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.layout().initial_point(rng)
    }
}

/// Adapter turning a closure into a [`LogDensity`].
pub struct FnDensity<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) -> f64 + Sync> FnDensity<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) -> f64 + Sync> LogDensity for FnDensity<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(x, grad)
    }
}

/// How the next state is chosen from a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingVariant {
    /// Multinomial sampling weighted by `exp(-H)`.
    #[default]
    Multinomial,
    /// Uniform sampling among the states inside a slice.
    Slice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NutsConfig {
    pub n_chains: usize,
    /// Iterations per chain, warm-up included.
    pub n_iter: usize,
    pub n_warmup: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    /// Energy error beyond which a trajectory counts as divergent.
    pub divergence_threshold: f64,
    pub seed: u64,
    pub variant: SamplingVariant,
    /// Print progress lines to standard error.
    pub progress: bool,
}

impl Default for NutsConfig {
    fn default() -> Self {
        Self {
            n_chains: 2,
            n_iter: 10_000,
            n_warmup: 5_000,
            target_accept: 0.8,
            max_tree_depth: 10,
            divergence_threshold: 1000.0,
            seed: 42,
            variant: SamplingVariant::Multinomial,
            progress: false,
        }
    }
}

impl NutsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::Sampler("need at least one chain".into()));
        }
        if self.n_warmup >= self.n_iter {
            return Err(Error::Sampler(format!(
                "n_warmup ({}) must be smaller than n_iter ({})",
                self.n_warmup, self.n_iter
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Sampler(format!("target_accept = {} outside (0, 1)", self.target_accept)));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::Sampler("max_tree_depth must be positive".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::Sampler("divergence_threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn n_draws(&self) -> usize {
        self.n_iter - self.n_warmup
    }
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub chain: usize,
    /// Retained unconstrained draws, one row per iteration after warm-up.
    pub draws: Vec<Vec<f64>>,
    pub log_density: Vec<f64>,
    pub divergent: Vec<bool>,
    /// Statistics for every iteration, warm-up included.
    pub stats: Vec<IterationStats>,
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iter: usize,
    pub warmup: bool,
    pub step_size: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub accept_stat: f64,
    pub energy: f64,
    pub log_density: f64,
}

impl ChainDraws {
    pub fn n_divergent(&self) -> usize {
        self.divergent.iter().filter(|&&d| d).count()
    }

    pub fn warmup_divergences(&self) -> usize {
        self.stats.iter().filter(|s| s.warmup && s.divergent).count()
    }
}

/// Retained draws of every chain, merged in chain order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub chains: Vec<ChainDraws>,
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    /// Draws per chain.
    pub fn n_draws(&self) -> usize {
        self.chains.first().map_or(0, |c| c.draws.len())
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_divergent(&self) -> usize {
        self.chains.iter().map(ChainDraws::n_divergent).sum()
    }

    /// Coordinate `i` as one vector per chain.
    pub fn column(&self, i: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.draws.iter().map(|d| d[i]).collect()).collect()
    }

    /// Every retained draw, chain by chain.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> {
        self.chains.iter().flat_map(|c| c.draws.iter().map(Vec::as_slice))
    }

    /// Applies `f` to every retained draw, keeping chain structure.
    pub fn map_draws<F>(&self, names: Vec<String>, mut f: F) -> Result<PosteriorDraws>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let mut chains = Vec::with_capacity(self.chains.len());
        for c in &self.chains {
            let draws = c.draws.iter().map(|d| f(d)).collect::<Result<Vec<_>>>()?;
            chains.push(ChainDraws { draws, ..c.clone() });
        }
        Ok(PosteriorDraws { names, chains })
    }

    /// One JSON object per iteration and chain.
    pub fn write_log(&self, mut out: impl Write) -> Result<()> {
        for c in &self.chains {
            for s in &c.stats {
                let line = serde_json::json!({
                    "chain": c.chain,
                    "iter": s.iter,
                    "warmup": s.warmup,
                    "step_size": s.step_size,
                    "tree_depth": s.tree_depth,
                    "n_leapfrog": s.n_leapfrog,
                    "divergent": s.divergent,
                    "accept_stat": s.accept_stat,
                    "energy": s.energy,
                    "lp": s.log_density,
                });
                writeln!(out, "{line}").map_err(|e| Error::io("sampler log", e))?;
            }
        }
        Ok(())
    }

    pub fn write_log_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_log(std::io::BufWriter::new(file))
    }

    /// Wide CSV: `chain,draw,lp,divergent,<names...>`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["chain".to_string(), "draw".into(), "lp".into(), "divergent".into()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(|e| Error::csv("draws", e))?;
        for c in &self.chains {
            for (k, d) in c.draws.iter().enumerate() {
                let mut row = vec![
                    (c.chain + 1).to_string(),
                    (k + 1).to_string(),
                    c.log_density[k].to_string(),
                    u8::from(c.divergent[k]).to_string(),
                ];
                row.extend(d.iter().map(f64::to_string));
                w.write_record(&row).map_err(|e| Error::csv("draws", e))?;
            }
        }
        w.flush().map_err(|e| Error::io("draws", e))?;
        Ok(())
    }
}

impl PosteriorDraws {
    /// Reads the layout written by [`PosteriorDraws::write_csv`]. Per-iteration
    /// statistics, step sizes and mass matrices are not stored there and come
    /// back empty.
    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers().map_err(|e| Error::csv("draws", e))?.clone();
        if header.len() < 4 || header.iter().take(4).ne(["chain", "draw", "lp", "divergent"]) {
            return Err(Error::Data("draws CSV must start with chain,draw,lp,divergent".into()));
        }
        let names: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
        let mut chains: Vec<ChainDraws> = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::csv("draws", e))?;
            let bad = |what: &str| Error::Data(format!("draws CSV line {}: bad {what}", k + 2));
            let chain: usize = rec[0].parse().map_err(|_| bad("chain"))?;
            if chain == 0 || chain > chains.len() + 1 {
                return Err(bad("chain order"));
            }
            if chain > chains.len() {
                chains.push(ChainDraws {
                    chain: chain - 1,
                    draws: vec![],
                    log_density: vec![],
                    divergent: vec![],
                    stats: vec![],
                    step_size: f64::NAN,
                    inv_mass: vec![],
                });
            }
            let c = &mut chains[chain - 1];
            c.log_density.push(rec[2].parse().map_err(|_| bad("lp"))?);
            c.divergent.push(&rec[3] == "1");
            let row = rec.iter().skip(4).map(|v| v.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>();
            c.draws.push(row.map_err(|_| bad("value"))?);
        }
        if chains.is_empty() || chains.iter().any(|c| c.draws.len() != chains[0].draws.len()) {
            return Err(Error::Data("draws CSV has no rows or ragged chains".into()));
        }
        Ok(Self { names, chains })
    }
}

/// Per-chain random stream.
pub fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

fn worker_count(n_chains: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var("STRICH_WORKERS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    cap.unwrap_or(available).min(n_chains).max(1)
}

/// Runs `config.n_chains` chains, each started from `target.initial_point`.
pub fn nuts_sample<D: LogDensity>(target: &D, names: Vec<String>, config: &NutsConfig) -> Result<PosteriorDraws> {
    nuts_sample_from(target, names, None, config)
}

/// As [`nuts_sample`]; `init`, when given, is the first starting point tried
/// by every chain.
pub fn nuts_sample_from<D: LogDensity>(
    target: &D,
    names: Vec<String>,
    init: Option<&[f64]>,
    config: &NutsConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    if names.len() != target.dim() {
        return Err(Error::Sampler(format!("{} names for {} coordinates", names.len(), target.dim())));
    }
    if let Some(x) = init {
        if x.len() != target.dim() {
            return Err(Error::Sampler(format!("initial point has {} coordinates, expected {}", x.len(), target.dim())));
        }
    }
    let n_workers = worker_count(config.n_chains);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ChainDraws>>>> = Mutex::new((0..config.n_chains).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..n_workers {
            scope.spawn(|| loop {
                let c = next.fetch_add(1, Ordering::SeqCst);
                if c >= config.n_chains {
                    break;
                }
                let out = run_chain(target, init, config, c);
                results.lock().expect("no worker panicked")[c] = Some(out);
            });
        }
    });
    let chains = results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every chain ran"))
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorDraws { names, chains })
}

fn find_initial_point<D: LogDensity>(target: &D, init: Option<&[f64]>, rng: &mut ChaCha8Rng) -> Result<Point> {
    let mut q = init.map_or_else(|| target.initial_point(rng), <[f64]>::to_vec);
    for attempt in 0..=100 {
        let z = Point::new(target, q.clone());
        if z.log_density.is_finite() && z.grad.iter().all(|g| g.is_finite()) {
            return Ok(z);
        }
        if attempt == 100 {
            break;
        }
        q = target.initial_point(rng);
        if let Some(x) = init {
            for (v, &x0) in q.iter_mut().zip(x) {
                *v = x0 + 0.1 * *v;
            }
        }
    }
    Err(Error::Sampler("target is not finite at the initial point after 100 retries".into()))
}

/// Runs one chain on its own random stream.
pub fn run_chain<D: LogDensity>(target: &D, init: Option<&[f64]>, config: &NutsConfig, chain: usize) -> Result<ChainDraws> {
    config.validate()?;
    let mut rng = chain_rng(config.seed, chain);
    let dim = target.dim();
    let mut z = find_initial_point(target, init, &mut rng)?;
    let mut inv_mass = vec![1.0; dim];
    let mut eps = {
        let ham = Hamiltonian { target, inv_mass: &inv_mass };
        find_reasonable_step_size(&ham, &z, 1.0, &mut rng)
    };
    let mut da = DualAveraging::new(config.target_accept, eps);
    let mut mass = MassAdaptation::new(dim, config.n_warmup);
    let n_draws = config.n_draws();
    let mut out = ChainDraws {
        chain,
        draws: Vec::with_capacity(n_draws),
        log_density: Vec::with_capacity(n_draws),
        divergent: Vec::with_capacity(n_draws),
        stats: Vec::with_capacity(config.n_iter),
        step_size: eps,
        inv_mass: Vec::new(),
    };
    let report_every = (config.n_iter / 10).max(1);
    for iter in 0..config.n_iter {
        let warmup = iter < config.n_warmup;
        let stats = {
            let ham = Hamiltonian { target, inv_mass: &inv_mass };
            transition(&ham, &mut z, eps, config.max_tree_depth, config.divergence_threshold, config.variant, &mut rng)
        };
        out.stats.push(IterationStats {
            iter,
            warmup,
            step_size: stats.step_size,
            tree_depth: stats.tree_depth,
            n_leapfrog: stats.n_leapfrog,
            divergent: stats.divergent,
            accept_stat: stats.accept_stat,
            energy: stats.energy,
            log_density: z.log_density,
        });
        if warmup {
            eps = da.update(stats.accept_stat);
            if mass.learn(&mut inv_mass, &z.q) {
                let ham = Hamiltonian { target, inv_mass: &inv_mass };
                eps = find_reasonable_step_size(&ham, &z, eps, &mut rng);
                da.restart(eps);
            }
            if iter + 1 == config.n_warmup {
                eps = da.final_step_size();
            }
        } else {
            out.draws.push(z.q.clone());
            out.log_density.push(z.log_density);
            out.divergent.push(stats.divergent);
        }
        if config.progress && ((iter + 1) % report_every == 0 || iter + 1 == config.n_iter) {
            let divergences = out.stats.iter().filter(|s| s.divergent).count();
            eprintln!(
                "chain {}: iteration {}/{} ({}), {} divergent so far",
                chain + 1,
                iter + 1,
                config.n_iter,
                if warmup { "warmup" } else { "sampling" },
                divergences
            );
        }
    }
    out.step_size = eps;
    out.inv_mass = inv_mass;
    Ok(out)
}

#[cfg(test)]
mod tests;
