//! Posterior summaries, convergence diagnostics, posterior predictive
//! draws, hold-out metrics, WAIC and importance-sampling LOO.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{CountPanel, Posterior};
use crate::sampler::PosteriorDraws;
use crate::scalar::log_sum_exp;

/// Type-7 (linear interpolation) quantile of an ascending sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(sample: &[f64], q: f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, q)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample variance with `n - 1` in the denominator.
fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Potential scale reduction of equal-length chains (no splitting).
fn rhat_of(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let between = n * var(&means);
    let within = mean(&chains.iter().map(|c| var(c)).collect::<Vec<_>>());
    if !(within > 0.0) {
        return f64::NAN;
    }
    ((between / within + n - 1.0) / n).sqrt()
}

/// Split R-hat. Constant draws give NaN.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    if chains.is_empty() || chains[0].len() < 4 {
        return f64::NAN;
    }
    rhat_of(&split_chains(chains))
}

/// Normal scores of pooled ranks, `Φ⁻¹((r − 3/8) / (S + 1/4))`, with
/// average ranks for ties.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let flat: Vec<f64> = chains.concat();
    let s = flat.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| flat[a].total_cmp(&flat[b]));
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && flat[order[j + 1]] == flat[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    let mut out = Vec::with_capacity(chains.len());
    let mut k = 0;
    for c in chains {
        out.push((0..c.len()).map(|_| {
            let z = normal.inverse_cdf((ranks[k] - 0.375) / (s as f64 + 0.25));
            k += 1;
            z
        }).collect());
    }
    out
}

/// Biased autocovariance at `lag`.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    x[..n - lag].iter().zip(&x[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial positive and
/// monotone sequence truncation.
fn ess_of(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let mean_acov = |lag: usize| chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, lag)).sum::<f64>() / m as f64;
    let mean_var = mean_acov(0) * n as f64 / (n as f64 - 1.0);
    let mut var_plus = mean_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        var_plus += var(&means);
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let mut rho = vec![0.0; n];
    let mut rho_even = 1.0;
    rho[0] = rho_even;
    let mut rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
    rho[1] = rho_odd;
    let mut t = 1;
    while t + 3 < n && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho[t + 1] = rho_even;
            rho[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t - 2;
    if rho_even > 0.0 {
        rho[max_t + 1] = rho_even;
    }
    let mut t = 1;
    while t + 2 <= max_t {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0;
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho[..=max_t].iter().sum::<f64>() + rho.get(max_t + 1).copied().unwrap_or(0.0);
    total / tau.max(1.0 / total.log10())
}

/// Bulk effective sample size: rank-normalized split chains.
pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
    if chains.is_empty() || chains[0].len() < 4 {
        return f64::NAN;
    }
    let split = split_chains(chains);
    if split.iter().flatten().all(|&v| v == split[0][0]) {
        return f64::NAN;
    }
    ess_of(&rank_normalize(&split))
}

/// Effective sample size without rank normalization or splitting.
pub fn ess_basic(chains: &[Vec<f64>]) -> f64 {
    if chains.is_empty() || chains[0].len() < 4 {
        return f64::NAN;
    }
    ess_of(chains)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    /// NaN (serialized as null) when the draws are constant.
    pub rhat: f64,
    pub ess_bulk: f64,
    /// Set when R-hat is undefined because every draw is identical.
    pub constant: bool,
}

impl ParamSummary {
    pub fn from_chains(name: impl Into<String>, chains: &[Vec<f64>]) -> Self {
        let all = chains.concat();
        let mut sorted = all.clone();
        sorted.sort_by(f64::total_cmp);
        let constant = sorted.first() == sorted.last();
        Self {
            name: name.into(),
            mean: mean(&all),
            sd: if all.len() > 1 { var(&all).sqrt() } else { 0.0 },
            q025: quantile_sorted(&sorted, 0.025),
            q50: quantile_sorted(&sorted, 0.5),
            q975: quantile_sorted(&sorted, 0.975),
            rhat: split_rhat(chains),
            ess_bulk: ess_bulk(chains),
            constant,
        }
    }

    /// `mean (2.5%, 97.5%)` with the given number of decimals.
    pub fn interval_string(&self, decimals: usize) -> String {
        format!("{:.d$} ({:.d$}, {:.d$})", self.mean, self.q025, self.q975, d = decimals)
    }
}

/// Summaries of every coordinate of a draw set.
pub fn summarize(draws: &PosteriorDraws) -> Vec<ParamSummary> {
    (0..draws.dim()).map(|i| ParamSummary::from_chains(draws.names[i].clone(), &draws.column(i))).collect()
}

/// Draws mapped to the natural parameter scale.
pub fn constrained_draws(post: &Posterior<f64>, draws: &PosteriorDraws) -> Result<PosteriorDraws> {
    let layout = post.layout();
    draws.map_draws(layout.names(), |x| layout.constrained_values(x))
}

/// Per-draw, per-observed-cell log-likelihood (rows: draws of all chains).
pub fn log_lik_matrix(post: &Posterior<f64>, draws: &PosteriorDraws) -> Result<Vec<Vec<f64>>> {
    draws.iter_draws().map(|x| post.pointwise_log_lik(x)).collect()
}

fn check_matrix(ll: &[Vec<f64>]) -> Result<(usize, usize)> {
    let s = ll.len();
    if s == 0 || ll[0].is_empty() {
        return Err(Error::Domain("log-likelihood matrix is empty".into()));
    }
    let n = ll[0].len();
    if ll.iter().any(|r| r.len() != n) {
        return Err(Error::Domain("log-likelihood rows differ in length".into()));
    }
    if ll.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("log-likelihood matrix has non-finite entries".into()));
    }
    Ok((s, n))
}

fn column(ll: &[Vec<f64>], i: usize) -> Vec<f64> {
    ll.iter().map(|r| r[i]).collect()
}

fn log_mean_exp(v: &[f64]) -> f64 {
    log_sum_exp(v) - (v.len() as f64).ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub pointwise: Vec<f64>,
}

/// WAIC on the deviance scale, `−2 (lppd − p_waic)`.
pub fn waic(ll: &[Vec<f64>]) -> Result<Waic> {
    let (s, n) = check_matrix(ll)?;
    if s == 1 {
        log::warn!("WAIC from a single draw: p_waic set to 0");
    }
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let mut pointwise = Vec::with_capacity(n);
    for i in 0..n {
        let col = column(ll, i);
        let l = log_mean_exp(&col);
        let p = if s > 1 { var(&col) } else { 0.0 };
        lppd += l;
        p_waic += p;
        pointwise.push(-2.0 * (l - p));
    }
    Ok(Waic { waic: -2.0 * (lppd - p_waic), lppd, p_waic, pointwise })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LooMethod {
    /// Pareto-smoothed weights where the tail fit is feasible.
    #[default]
    Psis,
    /// Raw importance weights `1 / p(y_i | θ)`.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loo {
    pub loo: f64,
    pub elpd: f64,
    pub p_loo: f64,
    pub pointwise_elpd: Vec<f64>,
    /// Pareto shape per cell; NaN where no tail was fitted.
    pub pareto_k: Vec<f64>,
    pub max_pareto_k: f64,
    /// Cells whose weights were actually smoothed.
    pub n_smoothed: usize,
}

/// Importance-sampling LOO on the deviance scale, `−2 Σ elpd_i`.
pub fn loo(ll: &[Vec<f64>], method: LooMethod) -> Result<Loo> {
    let (s, n) = check_matrix(ll)?;
    let mut elpd = 0.0;
    let mut lppd = 0.0;
    let mut pointwise = Vec::with_capacity(n);
    let mut pareto_k = Vec::with_capacity(n);
    let mut n_smoothed = 0;
    for i in 0..n {
        let col = column(ll, i);
        lppd += log_mean_exp(&col);
        let mut lw: Vec<f64> = col.iter().map(|v| -v).collect();
        let k = match method {
            LooMethod::Plain => None,
            LooMethod::Psis => psis_smooth(&mut lw),
        };
        if k.is_some_and(f64::is_finite) {
            n_smoothed += 1;
        }
        pareto_k.push(k.unwrap_or(f64::NAN));
        let num: Vec<f64> = lw.iter().zip(&col).map(|(w, l)| w + l).collect();
        let e = log_sum_exp(&num) - log_sum_exp(&lw);
        elpd += e;
        pointwise.push(e);
    }
    let _ = s;
    let max_pareto_k = pareto_k.iter().copied().filter(|k| !k.is_nan()).fold(f64::NAN, f64::max);
    Ok(Loo { loo: -2.0 * elpd, elpd, p_loo: lppd - elpd, pointwise_elpd: pointwise, pareto_k, max_pareto_k, n_smoothed })
}

/// Fits a generalized Pareto distribution to positive exceedances
/// (ascending) with the profile-likelihood grid of Zhang and Stephens and
/// a weakly informative pull of `k` toward 0.5. Returns `(k, σ)`.
pub fn gpd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let prior = 3.0;
    let m = 30 + (n as f64).sqrt() as usize;
    let x_star = x[((n as f64) / 4.0 + 0.5).floor() as usize - 1];
    let x_max = x[n - 1];
    let theta: Vec<f64> =
        (1..=m).map(|j| 1.0 / x_max + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / x_star).collect();
    let profile: Vec<f64> = theta
        .iter()
        .map(|&t| {
            let k = x.iter().map(|&v| (-t * v).ln_1p()).sum::<f64>() / n as f64;
            n as f64 * ((-t / k).ln() - k - 1.0)
        })
        .collect();
    let norm = log_sum_exp(&profile);
    // drop grid points with negligible weight, then renormalize
    let kept: Vec<(f64, f64)> = theta
        .iter()
        .zip(&profile)
        .map(|(&t, &l)| (t, (l - norm).exp()))
        .filter(|&(_, w)| w >= 10.0 * f64::EPSILON)
        .collect();
    let w_sum: f64 = kept.iter().map(|&(_, w)| w).sum();
    let theta_hat: f64 = kept.iter().map(|&(t, w)| t * w / w_sum).sum();
    let k = x.iter().map(|&v| (-theta_hat * v).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let a = 10.0;
    let k = k * n as f64 / (n as f64 + a) + a * 0.5 / (n as f64 + a);
    (k, sigma)
}

fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < f64::EPSILON {
        -sigma * (-p).ln_1p()
    } else {
        sigma * (-k * (-p).ln_1p()).exp_m1() / k
    }
}

/// Pareto-smooths log weights in place and returns `k̂`, or `None` when
/// the tail is too short (fewer than 5 draws) or degenerate.
pub fn psis_smooth(lw: &mut [f64]) -> Option<f64> {
    let s = lw.len();
    let m = (0.2 * s as f64).min(3.0 * (s as f64).sqrt()).ceil() as usize;
    if m < 5 || m + 1 > s {
        return None;
    }
    let max = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lw.iter_mut().for_each(|v| *v -= max);
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
    let cutoff = lw[order[s - m - 1]].max(f64::MIN_POSITIVE.ln());
    let tail: Vec<usize> = order[s - m..].iter().copied().filter(|&i| lw[i] > cutoff).collect();
    if tail.len() < 5 {
        lw.iter_mut().for_each(|v| *v += max);
        return None;
    }
    let exp_cut = cutoff.exp();
    let exceed: Vec<f64> = tail.iter().map(|&i| lw[i].exp() - exp_cut).collect();
    let (k, sigma) = gpd_fit(&exceed);
    if k.is_finite() {
        let len = tail.len() as f64;
        for (j, &i) in tail.iter().enumerate() {
            let p = (j as f64 + 0.5) / len;
            lw[i] = (gpd_quantile(p, k, sigma) + exp_cut).ln().min(0.0);
        }
    }
    lw.iter_mut().for_each(|v| *v += max);
    Some(k)
}

/// Posterior predictive counts: `counts[g][t][draw]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDraws {
    pub counts: Vec<Vec<Vec<u64>>>,
}

fn poisson_draw<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> u64 {
    if !(mu > 0.0) {
        return 0;
    }
    match Poisson::new(mu) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => mu.min(u64::MAX as f64) as u64,
    }
}

/// One Poisson count per cell and retained draw, observed and held-out
/// cells alike.
pub fn posterior_predictive<R: Rng + ?Sized>(
    post: &Posterior<f64>,
    draws: &PosteriorDraws,
    rng: &mut R,
) -> Result<PredictiveDraws> {
    let (g_n, t_n) = (post.spec().n_regions, post.spec().n_times);
    let total = draws.n_chains() * draws.n_draws();
    let mut counts = vec![vec![Vec::with_capacity(total); t_n]; g_n];
    for x in draws.iter_draws() {
        let ln_mu = post.ln_means(x)?;
        for g in 0..g_n {
            for t in 0..t_n {
                counts[g][t].push(poisson_draw(ln_mu[g * t_n + t].exp(), rng));
            }
        }
    }
    Ok(PredictiveDraws { counts })
}

/// Predictive mean and equal-tailed 95% interval of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellInterval {
    pub mean: f64,
    pub lower: f64,
    pub median: f64,
    pub upper: f64,
}

impl PredictiveDraws {
    pub fn interval(&self, g: usize, t: usize) -> CellInterval {
        let mut v: Vec<f64> = self.counts[g][t].iter().map(|&c| c as f64).collect();
        v.sort_by(f64::total_cmp);
        CellInterval {
            mean: mean(&v),
            lower: quantile_sorted(&v, 0.025),
            median: quantile_sorted(&v, 0.5),
            upper: quantile_sorted(&v, 0.975),
        }
    }

    pub fn intervals(&self) -> Vec<Vec<CellInterval>> {
        (0..self.counts.len()).map(|g| (0..self.counts[g].len()).map(|t| self.interval(g, t)).collect()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoldoutMetrics {
    pub coverage: f64,
    pub piw: f64,
    pub rmse: f64,
    pub n_cells: usize,
}

/// Coverage, mean interval width, and RMSE of the predictive mean over the
/// cells with `holdout[g][t] == true`.
pub fn coverage_piw_rmse(pred: &PredictiveDraws, truth: &CountPanel, holdout: &[Vec<bool>]) -> Result<HoldoutMetrics> {
    let mut n = 0usize;
    let (mut inside, mut width, mut sq) = (0usize, 0.0, 0.0);
    if holdout.len() != truth.n_regions() || pred.counts.len() != truth.n_regions() {
        return Err(Error::Data("hold-out mask, predictions and truth disagree in shape".into()));
    }
    for (g, row) in holdout.iter().enumerate() {
        if row.len() != truth.n_times() {
            return Err(Error::Data("hold-out mask, predictions and truth disagree in shape".into()));
        }
        for (t, &held) in row.iter().enumerate() {
            if !held {
                continue;
            }
            let iv = pred.interval(g, t);
            let y = truth.counts[g][t] as f64;
            n += 1;
            if iv.lower <= y && y <= iv.upper {
                inside += 1;
            }
            width += iv.upper - iv.lower;
            sq += (iv.mean - y).powi(2);
        }
    }
    if n == 0 {
        return Err(Error::Data("hold-out mask is empty".into()));
    }
    let nf = n as f64;
    Ok(HoldoutMetrics { coverage: inside as f64 / nf, piw: width / nf, rmse: (sq / nf).sqrt(), n_cells: n })
}

/// Pointwise 95% band of one fitted trend curve, weeks `1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBand {
    pub curve: usize,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub median: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Bands of every trend curve of the fit, across all retained draws.
pub fn curve_bands(post: &Posterior<f64>, draws: &PosteriorDraws) -> Result<Vec<CurveBand>> {
    let spec = post.spec();
    let t_n = spec.n_times;
    let mut values = vec![vec![Vec::new(); t_n]; spec.n_curves()];
    for x in draws.iter_draws() {
        let (params, _) = post.layout().to_constrained(x)?;
        for (c, curve) in params.gamma.iter().enumerate() {
            for (t, v) in values[c].iter_mut().enumerate() {
                v.push(curve.trend(spec.trend_formula, t as i64 + 1));
            }
        }
    }
    Ok(values
        .into_iter()
        .enumerate()
        .map(|(curve, weeks)| {
            let mut band = CurveBand { curve, mean: vec![], lower: vec![], median: vec![], upper: vec![] };
            for mut v in weeks {
                v.sort_by(f64::total_cmp);
                band.mean.push(mean(&v));
                band.lower.push(quantile_sorted(&v, 0.025));
                band.median.push(quantile_sorted(&v, 0.5));
                band.upper.push(quantile_sorted(&v, 0.975));
            }
            band
        })
        .collect())
}

/// Posterior mean of `φ`, indexed `[g][t]`.
pub fn phi_means(post: &Posterior<f64>, draws: &PosteriorDraws) -> Vec<Vec<f64>> {
    let layout = post.layout();
    let (g_n, t_n) = (post.spec().n_regions, post.spec().n_times);
    let mut out = vec![vec![0.0; t_n]; g_n];
    let mut n = 0.0;
    for x in draws.iter_draws() {
        n += 1.0;
        for (g, row) in out.iter_mut().enumerate() {
            for (t, v) in row.iter_mut().enumerate() {
                *v += x[layout.phi_index(g, t)];
            }
        }
    }
    out.iter_mut().flatten().for_each(|v| *v /= n);
    out
}

/// Everything reported for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub params: Vec<ParamSummary>,
    pub divergences: usize,
    pub n_chains: usize,
    pub n_draws: usize,
    pub waic: Waic,
    pub loo: Loo,
    pub max_rhat: f64,
    pub min_ess_bulk: f64,
    pub curves: Vec<CurveBand>,
    pub phi_mean: Vec<Vec<f64>>,
}

impl FitSummary {
    pub fn new(post: &Posterior<f64>, draws: &PosteriorDraws) -> Result<Self> {
        let constrained = constrained_draws(post, draws)?;
        let params = summarize(&constrained);
        let ll = log_lik_matrix(post, draws)?;
        let waic = waic(&ll)?;
        let loo = loo(&ll, LooMethod::Psis)?;
        let max_rhat = params.iter().map(|p| p.rhat).filter(|r| !r.is_nan()).fold(f64::NAN, f64::max);
        let min_ess_bulk = params.iter().map(|p| p.ess_bulk).filter(|r| !r.is_nan()).fold(f64::NAN, f64::min);
        Ok(Self {
            params,
            divergences: draws.n_divergent(),
            n_chains: draws.n_chains(),
            n_draws: draws.n_draws(),
            waic,
            loo,
            max_rhat,
            min_ess_bulk,
            curves: curve_bands(post, draws)?,
            phi_mean: phi_means(post, draws),
        })
    }

    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Machine-readable metrics record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub coverage: Option<f64>,
    pub piw: Option<f64>,
    pub rmse: Option<f64>,
    pub waic: f64,
    pub loo: f64,
    pub divergences: usize,
}

impl Metrics {
    pub fn new(summary: &FitSummary, holdout: Option<&HoldoutMetrics>) -> Self {
        Self {
            coverage: holdout.map(|h| h.coverage),
            piw: holdout.map(|h| h.piw),
            rmse: holdout.map(|h| h.rmse),
            waic: summary.waic.waic,
            loo: summary.loo.loo,
            divergences: summary.divergences,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// 64-bit LCG shared with the Python oracle script.
    struct Lcg(u64);

    impl Lcg {
        fn next(&mut self) -> f64 {
            self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (self.0 >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    fn ar1(seed: u64, n: usize, phi: f64) -> Vec<f64> {
        let mut r = Lcg(seed);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                x = phi * x + (r.next() - 0.5);
                x
            })
            .collect()
    }

    #[test]
    fn type7_quantiles() {
        let v = [3.0, 1.0, 4.0, 1.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 5.0);
        // h = 4 * 0.3 = 1.2 between sorted[1] = 1 and sorted[2] = 3
        assert!((quantile(&v, 0.3) - 1.4).abs() < 1e-15);
    }

    #[test]
    fn rhat_and_ess_match_reference_implementation() {
        let chains = vec![ar1(1, 500, 0.6), ar1(2, 500, 0.6).iter().map(|v| v + 0.05).collect()];
        assert!((split_rhat(&chains) - 1.007_315_877_832_933_2).abs() < 1e-12);
        assert!((ess_bulk(&chains) - 208.611_489_850_902_61).abs() < 1e-8);
    }

    #[test]
    fn rhat_white_noise_and_shifted() {
        let a = ar1(3, 4000, 0.0);
        let b = ar1(4, 4000, 0.0);
        let r = split_rhat(&[a.clone(), b.clone()]);
        assert!((r - 1.0).abs() < 0.01, "{r}");
        let shifted: Vec<f64> = a.iter().map(|v| v + 1.0).collect();
        assert!(split_rhat(&[a.clone(), shifted]) > 1.1);
        let ess = ess_bulk(&[a, b]);
        assert!((ess / 8000.0 - 1.0).abs() < 0.1, "{ess}");
        assert!(split_rhat(&[vec![2.0; 100], vec![2.0; 100]]).is_nan());
    }

    #[test]
    fn ess_tracks_ar1_theory() {
        // ESS of AR(1) is n (1 − φ) / (1 + φ); φ = 0.8 ⇒ n / 9.
        let chains: Vec<Vec<f64>> = (0..4).map(|s| ar1(10 + s, 20_000, 0.8)).collect();
        let ess = ess_basic(&chains);
        assert!((ess / (80_000.0 / 9.0) - 1.0).abs() < 0.15, "{ess}");
    }

    fn brute_waic(ll: &[Vec<f64>]) -> f64 {
        let s = ll.len() as f64;
        let mut total = 0.0;
        for i in 0..ll[0].len() {
            let lppd = (ll.iter().map(|r| r[i].exp()).sum::<f64>() / s).ln();
            let m = ll.iter().map(|r| r[i]).sum::<f64>() / s;
            let v = ll.iter().map(|r| (r[i] - m).powi(2)).sum::<f64>() / (s - 1.0);
            total += lppd - v;
        }
        -2.0 * total
    }

    fn brute_loo(ll: &[Vec<f64>]) -> f64 {
        let s = ll.len() as f64;
        let mut total = 0.0;
        for i in 0..ll[0].len() {
            let harmonic = ll.iter().map(|r| (-r[i]).exp()).sum::<f64>() / s;
            total -= harmonic.ln();
        }
        -2.0 * total
    }

    fn random_ll(rng: &mut ChaCha8Rng, s: usize, n: usize) -> Vec<Vec<f64>> {
        (0..s).map(|_| (0..n).map(|_| rng.random_range(-6.0..-0.1)).collect()).collect()
    }

    #[test]
    fn waic_and_loo_match_direct_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let ll = random_ll(&mut rng, 5, 4);
            let w = waic(&ll).unwrap().waic;
            assert!((w - brute_waic(&ll)).abs() <= 1e-10 * w.abs().max(1.0));
            for method in [LooMethod::Plain, LooMethod::Psis] {
                let l = loo(&ll, method).unwrap();
                assert!((l.loo - brute_loo(&ll)).abs() <= 1e-10 * l.loo.abs().max(1.0));
                assert_eq!(l.n_smoothed, 0);
            }
        }
    }

    #[test]
    fn single_and_repeated_draws() {
        let row = vec![-1.5, -0.2, -3.0];
        let total: f64 = row.iter().sum();
        let w1 = waic(&[row.clone()]).unwrap();
        assert!((w1.waic + 2.0 * total).abs() < 1e-12);
        assert_eq!(w1.p_waic, 0.0);
        let w2 = waic(&[row.clone(), row.clone()]).unwrap();
        assert!((w2.waic - w1.waic).abs() < 1e-12);
        let l = loo(&[row.clone()], LooMethod::Psis).unwrap();
        assert!((l.loo + 2.0 * total).abs() < 1e-12);
        // Constant columns: LOO equals WAIC even with smoothing-eligible S.
        let many = vec![row; 200];
        let (w, l) = (waic(&many).unwrap().waic, loo(&many, LooMethod::Psis).unwrap().loo);
        assert!((w - l).abs() < 1e-9, "{w} vs {l}");
        assert!(waic(&[]).is_err());
        assert!(waic(&[vec![f64::NAN]]).is_err());
    }

    #[test]
    fn psis_matches_reference_implementation() {
        let mut r = Lcg(7);
        let ll: Vec<Vec<f64>> =
            (0..400).map(|_| (0..3).map(|i| (r.next() + 1e-3).ln() * (i + 1) as f64).collect()).collect();
        let l = loo(&ll, LooMethod::Psis).unwrap();
        let k = [0.920_531_852_207_761, 1.810_757_563_587_466, 1.560_768_475_952_768_5];
        let elpd = [-1.831_361_699_782_126_5, -6.588_868_269_963_432, -7.709_721_697_770_488];
        for i in 0..3 {
            assert!((l.pareto_k[i] - k[i]).abs() < 1e-10, "k[{i}] {} vs {}", l.pareto_k[i], k[i]);
            assert!((l.pointwise_elpd[i] - elpd[i]).abs() < 1e-10, "elpd[{i}]");
        }
        assert!((l.loo - 32.259_903_335_032_09).abs() < 1e-9);
        let mut r = Lcg(11);
        let ll: Vec<Vec<f64>> =
            (0..400).map(|_| (0..2).map(|i| -0.5 * (r.next() * 2.0).powi(2) * (i + 1) as f64).collect()).collect();
        let l = loo(&ll, LooMethod::Psis).unwrap();
        let k = [-0.620_732_506_729_883, -0.107_142_400_031_428_12];
        let elpd = [-0.859_733_616_224_317_4, -1.931_196_161_295_604];
        for i in 0..2 {
            assert!((l.pareto_k[i] - k[i]).abs() < 1e-10, "mild k[{i}] {}", l.pareto_k[i]);
            assert!((l.pointwise_elpd[i] - elpd[i]).abs() < 1e-10, "mild elpd[{i}]");
        }
    }

    #[test]
    fn gpd_fit_recovers_shape() {
        // Exact quantiles of GPD(k = 0.3, σ = 2) form a noise-free sample.
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|j| gpd_quantile((j as f64 + 0.5) / n as f64, 0.3, 2.0)).collect();
        let (k, sigma) = gpd_fit(&x);
        assert!((k - 0.3).abs() < 0.03, "k = {k}");
        assert!((sigma - 2.0).abs() < 0.1, "sigma = {sigma}");
    }

    fn panel_with(counts: Vec<Vec<u64>>) -> CountPanel {
        let g = counts.len();
        CountPanel::new((0..g).map(|i| format!("r{i}")).collect(), counts, vec![0.0; g]).unwrap()
    }

    #[test]
    fn metrics_hand_computed() {
        // Three held-out cells with five predictive draws each.
        let pred = PredictiveDraws {
            counts: vec![vec![vec![1, 2, 3, 4, 5], vec![10, 10, 10, 10, 10], vec![0, 0, 0, 0, 100]]],
        };
        let truth = panel_with(vec![vec![5, 9, 50]]);
        let m = coverage_piw_rmse(&pred, &truth, &[vec![true, true, true]]).unwrap();
        // Intervals (type 7, h = 0.1 and 3.9): [1.1, 4.9], [10, 10], [0, 90].
        assert!((m.coverage - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.piw - (3.8 + 0.0 + 90.0) / 3.0).abs() < 1e-12);
        let rmse = (((3.0f64 - 5.0).powi(2) + 1.0 + (20.0f64 - 50.0).powi(2)) / 3.0).sqrt();
        assert!((m.rmse - rmse).abs() < 1e-12);
        assert!(coverage_piw_rmse(&pred, &truth, &[vec![false; 3]]).is_err());
        let exact = PredictiveDraws { counts: vec![vec![vec![5; 4], vec![9; 4], vec![50; 4]]] };
        let m = coverage_piw_rmse(&exact, &truth, &[vec![true; 3]]).unwrap();
        assert_eq!((m.coverage, m.piw, m.rmse), (1.0, 0.0, 0.0));
    }

    #[test]
    fn poisson_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!((0..100).all(|_| poisson_draw(0.0, &mut rng) == 0));
        let n = 100_000;
        let m = (0..n).map(|_| poisson_draw(4.0, &mut rng) as f64).sum::<f64>() / n as f64;
        // standard error sqrt(4 / 1e5) ≈ 0.0063
        assert!((m - 4.0).abs() < 0.03, "{m}");
    }

    #[test]
    fn summary_quantiles_are_ordered() {
        let chains = vec![ar1(1, 300, 0.3), ar1(2, 300, 0.3)];
        let s = ParamSummary::from_chains("x", &chains);
        assert!(s.q025 <= s.q50 && s.q50 <= s.q975);
        assert!(s.rhat >= 0.99);
        assert_eq!(ParamSummary { mean: 0.14, q025: 0.02, q975: 0.21, ..s }.interval_string(2), "0.14 (0.02, 0.21)");
        let c = ParamSummary::from_chains("c", &[vec![1.0; 10], vec![1.0; 10]]);
        assert!(c.constant && c.rhat.is_nan());
    }
}
