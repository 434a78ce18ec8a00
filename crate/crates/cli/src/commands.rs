use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use strich::datapipe::{self, italy, make_holdout, AggregateOptions, HoldoutMask, WaveWindow, WeekAnchor};
use strich::graph::{read_graph_csv, SpatialGraph};
use strich::inference::{
    coverage_piw_rmse, log_lik_matrix, loo, posterior_predictive, waic, CellInterval, CurveBand, FitSummary,
    HoldoutMetrics, LooMethod, PredictiveDraws,
};
use strich::model::{CountPanel, ModelSpec, ParamBlock, Posterior};
use strich::gmrf::{CarArParams, CarArState};
use strich::richards::RichardsParams;
use strich::sampler::{chain_rng, nuts_sample, PosteriorDraws};
use strich::{plot, Model};

use crate::config::Resolved;
use crate::files;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json_value(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).with_context(|| format!("missing fit artifact {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Panels, mask and posterior rebuilt from a resolved configuration.
pub struct Problem {
    pub cfg: Resolved,
    pub full: CountPanel,
    pub mask: Option<HoldoutMask>,
    pub post: Model,
}

impl Problem {
    pub fn load(cfg: Resolved) -> Result<Self> {
        let full = datapipe::read_panel_csv(&cfg.data).with_context(|| format!("reading panel {}", cfg.data.display()))?;
        let graph = match &cfg.graph {
            None => SpatialGraph::disconnected(full.n_regions())?,
            Some(path) => read_graph_csv(path, full.n_regions(), cfg.dichotomize)
                .with_context(|| format!("reading graph {}", path.display()))?,
        };
        let mask = cfg.holdout.map(|f| make_holdout(&full, f, cfg.nuts.seed)).transpose()?;
        let mut fit = match &mask {
            Some(m) => m.apply(&full)?,
            None => full.clone(),
        };
        if cfg.standardize && fit.n_covariates() > 0 {
            fit.standardize_covariates()?;
        }
        let spec = ModelSpec::for_panel(&fit)?
            .with_trend(cfg.trend.into(), cfg.formula.into())
            .with_graph_id(cfg.model.graph_id());
        let post = Posterior::new(spec, graph, &fit)?;
        Ok(Self { cfg, full, mask, post })
    }

    pub fn read_draws(&self) -> Result<PosteriorDraws> {
        let path = self.cfg.out.join(files::DRAWS_RAW);
        let file = fs::File::open(&path).with_context(|| format!("missing fit artifact {}", path.display()))?;
        let draws = PosteriorDraws::read_csv(std::io::BufReader::new(file))?;
        if draws.names != self.post.layout().names() {
            bail!("{} does not match the configured model", path.display());
        }
        Ok(draws)
    }

    pub fn predictive(&self, draws: &PosteriorDraws) -> Result<PredictiveDraws> {
        let mut rng = chain_rng(self.cfg.nuts.seed, self.cfg.nuts.n_chains);
        Ok(posterior_predictive(&self.post, draws, &mut rng)?)
    }
}

/// Record written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub label: String,
    pub model: String,
    pub trend: String,
    pub formula: String,
    pub n_regions: usize,
    pub n_times: usize,
    pub n_chains: usize,
    pub n_draws: usize,
    pub divergences: usize,
    /// Held-out cells; absent without a hold-out mask.
    pub out_of_sample: Option<HoldoutMetrics>,
    /// Cells the model was fitted to.
    pub in_sample: HoldoutMetrics,
    pub waic: f64,
    pub p_waic: f64,
    pub loo: f64,
    pub p_loo: f64,
    pub max_pareto_k: Option<f64>,
}

fn lower_name<T: std::fmt::Debug>(v: T) -> String {
    format!("{v:?}").to_lowercase()
}

pub fn metrics(problem: &Problem, draws: &PosteriorDraws, pred: &PredictiveDraws) -> Result<MetricsRecord> {
    let ll = log_lik_matrix(&problem.post, draws)?;
    let w = waic(&ll)?;
    let l = loo(&ll, LooMethod::Psis)?;
    let observed = problem.post_observed();
    let in_sample = coverage_piw_rmse(pred, &problem.full, &observed)?;
    let out_of_sample = match &problem.mask {
        Some(m) => Some(coverage_piw_rmse(pred, &problem.full, &m.held_out())?),
        None => None,
    };
    Ok(MetricsRecord {
        label: problem.cfg.label.clone(),
        model: lower_name(problem.cfg.model),
        trend: lower_name(problem.cfg.trend),
        formula: lower_name(problem.cfg.formula),
        n_regions: problem.full.n_regions(),
        n_times: problem.full.n_times(),
        n_chains: draws.n_chains(),
        n_draws: draws.n_draws(),
        divergences: draws.n_divergent(),
        out_of_sample,
        in_sample,
        waic: w.waic,
        p_waic: w.p_waic,
        loo: l.loo,
        p_loo: l.p_loo,
        max_pareto_k: Some(l.max_pareto_k).filter(|k| k.is_finite()),
    })
}

impl Problem {
    fn post_observed(&self) -> Vec<Vec<bool>> {
        match &self.mask {
            Some(m) => m.observed(),
            None => vec![vec![true; self.full.n_times()]; self.full.n_regions()],
        }
    }
}

fn write_predictive(path: &Path, problem: &Problem, pred: &PredictiveDraws) -> Result<()> {
    let held = problem.mask.as_ref().map(HoldoutMask::held_out);
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["region", "week", "count", "held_out", "mean", "lower", "median", "upper"])?;
    for (g, region) in problem.full.regions.iter().enumerate() {
        for t in 0..problem.full.n_times() {
            let iv = pred.interval(g, t);
            let h = held.as_ref().is_some_and(|m| m[g][t]);
            w.write_record([
                region.clone(),
                (t + 1).to_string(),
                problem.full.counts[g][t].to_string(),
                u8::from(h).to_string(),
                iv.mean.to_string(),
                iv.lower.to_string(),
                iv.median.to_string(),
                iv.upper.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn fit(cfg: Resolved) -> Result<()> {
    let out = cfg.out.clone();
    let problem = Problem::load(cfg)?;
    write_json(&out.join(files::CONFIG), &problem.cfg)?;
    if let Some(m) = &problem.mask {
        write_json(&out.join(files::HOLDOUT), m)?;
    }
    let names = problem.post.layout().names();
    let draws = nuts_sample(&problem.post, names, &problem.cfg.nuts)?;
    let raw = out.join(files::DRAWS_RAW);
    draws.write_csv(BufWriter::new(fs::File::create(&raw).with_context(|| format!("writing {}", raw.display()))?))?;
    let natural = strich::inference::constrained_draws(&problem.post, &draws)?;
    let path = out.join(files::DRAWS);
    natural.write_csv(BufWriter::new(fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?))?;
    draws.write_log_file(&out.join(files::LOG))?;
    let summary = FitSummary::new(&problem.post, &draws)?;
    write_json(&out.join(files::SUMMARY), &summary)?;
    let pred = problem.predictive(&draws)?;
    write_predictive(&out.join(files::PREDICTIVE), &problem, &pred)?;
    let record = metrics(&problem, &draws, &pred)?;
    write_json(&out.join(files::METRICS), &record)?;
    eprintln!(
        "fit {}: {} chains x {} draws, {} divergences, max R-hat {:.3}, WAIC {:.1}",
        problem.cfg.label,
        summary.n_chains,
        summary.n_draws,
        summary.divergences,
        summary.max_rhat,
        summary.waic.waic
    );
    Ok(())
}

pub fn predict(dir: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = Resolved::load(dir)?;
    cfg.out = dir.to_path_buf();
    let mut problem = Problem::load(cfg)?;
    let draws = problem.read_draws()?;
    if let Some(s) = seed {
        problem.cfg.nuts.seed = s;
    }
    let pred = problem.predictive(&draws)?;
    write_predictive(&dir.join(files::PREDICTIVE), &problem, &pred)
}

pub fn evaluate(dirs: &[PathBuf], table: Option<&Path>) -> Result<()> {
    let mut rows = Vec::new();
    for dir in dirs {
        let mut cfg = Resolved::load(dir)?;
        cfg.out = dir.clone();
        let problem = Problem::load(cfg)?;
        if problem.mask.is_none() {
            bail!("{}: fit has an empty hold-out mask; refit with --holdout", dir.display());
        }
        let draws = problem.read_draws()?;
        let pred = problem.predictive(&draws)?;
        let record = metrics(&problem, &draws, &pred)?;
        write_json(&dir.join(files::METRICS), &record)?;
        let o = record.out_of_sample.expect("mask checked above");
        println!(
            "{:<16} coverage {:.3} ({:.3})  PIW {:.1}  RMSE {:.1} ({:.1})  WAIC {:.1}  LOO {:.1}",
            record.label,
            o.coverage,
            record.in_sample.coverage,
            o.piw,
            o.rmse,
            record.in_sample.rmse,
            record.waic,
            record.loo
        );
        rows.push(record);
    }
    if let Some(path) = table {
        write_json(path, &rows)?;
    }
    Ok(())
}

pub fn summarize(dir: &Path, all: bool) -> Result<()> {
    let v = read_json_value(&dir.join(files::SUMMARY))?;
    let params = v["params"].as_array().context("summary.json has no params")?;
    println!("{:<12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>7} {:>8}", "name", "mean", "sd", "2.5%", "50%", "97.5%", "rhat", "ess");
    let num = |x: &serde_json::Value| x.as_f64().map_or("-".to_string(), |f| format!("{f:.4}"));
    for p in params {
        let name = p["name"].as_str().unwrap_or("?");
        if !all && name.starts_with("phi[") {
            continue;
        }
        println!(
            "{:<12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>7} {:>8}",
            name,
            num(&p["mean"]),
            num(&p["sd"]),
            num(&p["q025"]),
            num(&p["q50"]),
            num(&p["q975"]),
            p["rhat"].as_f64().map_or("-".into(), |f| format!("{f:.3}")),
            p["ess_bulk"].as_f64().map_or("-".into(), |f| format!("{f:.0}"))
        );
    }
    println!(
        "divergences {}  WAIC {}  LOO {}",
        v["divergences"],
        num(&v["waic"]["waic"]),
        num(&v["loo"]["loo"])
    );
    Ok(())
}

#[derive(Deserialize)]
struct PlotInputs {
    curves: Vec<CurveBand>,
    phi_mean: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct PredictiveRow {
    region: String,
    week: usize,
    count: u64,
    held_out: u8,
    mean: f64,
    lower: f64,
    median: f64,
    upper: f64,
}

pub fn plot(dir: &Path) -> Result<()> {
    let summary_path = dir.join(files::SUMMARY);
    let text = fs::read_to_string(&summary_path)
        .with_context(|| format!("missing fit artifact {}", summary_path.display()))?;
    let inputs: PlotInputs = serde_json::from_str(&text).with_context(|| format!("parsing {}", summary_path.display()))?;
    let pred_path = dir.join(files::PREDICTIVE);
    let mut reader =
        csv::Reader::from_path(&pred_path).with_context(|| format!("missing fit artifact {}", pred_path.display()))?;
    let mut regions: Vec<String> = Vec::new();
    let mut counts: Vec<Vec<u64>> = Vec::new();
    let mut intervals: Vec<Vec<CellInterval>> = Vec::new();
    let mut held: Vec<Vec<bool>> = Vec::new();
    for row in reader.deserialize() {
        let row: PredictiveRow = row.with_context(|| format!("parsing {}", pred_path.display()))?;
        if row.week == 1 {
            regions.push(row.region.clone());
            counts.push(vec![]);
            intervals.push(vec![]);
            held.push(vec![]);
        }
        let g = regions.len().checked_sub(1).context("predictive.csv must start at week 1")?;
        counts[g].push(row.count);
        held[g].push(row.held_out == 1);
        intervals[g].push(CellInterval { mean: row.mean, lower: row.lower, median: row.median, upper: row.upper });
    }
    let labels: Vec<String> = if inputs.curves.len() == 1 { vec!["common".into()] } else { regions.clone() };
    fs::write(dir.join(files::CURVE_SVG), plot::curve_svg(&inputs.curves, &labels, "Fitted Richards trend per 100,000"))?;
    fs::write(
        dir.join(files::HEATMAP_SVG),
        plot::heatmap_svg(&inputs.phi_mean, &regions, "Posterior mean of the random effect"),
    )?;
    fs::write(
        dir.join(files::FIT_SVG),
        plot::region_fit_svg(&regions, &counts, &intervals, Some(&held), "Observed counts and 95% predictive intervals"),
    )?;
    Ok(())
}

/// Parameters of a simulation, without the random effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimTruth {
    pub gamma: Vec<RichardsParams<f64>>,
    #[serde(default)]
    pub beta: Vec<f64>,
    pub alpha: f64,
    pub rho: f64,
    pub tau: f64,
}

impl SimTruth {
    /// Single curve peaking around 40% of the window.
    pub fn default_for(n_times: usize, n_cov: usize) -> Self {
        Self {
            gamma: vec![RichardsParams { b: 0.06, r: 20.0, h: 0.62, p: 0.4 * n_times as f64, s: 2.0 }],
            beta: vec![0.0; n_cov],
            alpha: 0.8,
            rho: 0.85,
            tau: 4.0,
        }
    }

    fn block(&self) -> ParamBlock<f64> {
        ParamBlock {
            gamma: self.gamma.clone(),
            beta: self.beta.clone(),
            car: CarArState { phi: vec![], params: CarArParams { alpha: self.alpha, rho: self.rho, tau: self.tau } },
        }
    }
}

pub fn simulate(cfg: Resolved, truth: Option<&Path>, n_weeks: Option<usize>) -> Result<()> {
    let mut template =
        datapipe::read_panel_csv(&cfg.data).with_context(|| format!("reading panel {}", cfg.data.display()))?;
    if let Some(t) = n_weeks {
        if t < 2 || t > template.n_times() {
            bail!("--weeks must be between 2 and {}", template.n_times());
        }
        for g in 0..template.n_regions() {
            template.counts[g].truncate(t);
            template.observed[g].truncate(t);
            template.covariates[g].truncate(t);
        }
    }
    let graph = match &cfg.graph {
        None => SpatialGraph::disconnected(template.n_regions())?,
        Some(path) => read_graph_csv(path, template.n_regions(), cfg.dichotomize)
            .with_context(|| format!("reading graph {}", path.display()))?,
    };
    let spec = ModelSpec::for_panel(&template)?.with_trend(cfg.trend.into(), cfg.formula.into());
    let truth = match truth {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading truth {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing truth {}", p.display()))?
        }
        None => SimTruth::default_for(template.n_times(), template.n_covariates()),
    };
    let mut rng = chain_rng(cfg.nuts.seed, 0);
    let sim = datapipe::simulate_panel(&template, &truth.block(), &spec, &graph, &mut rng)?;
    datapipe::write_panel_csv(&cfg.out.join(files::PANEL), &sim.panel)?;
    write_json(&cfg.out.join(files::TRUTH), &sim.truth)?;
    Ok(())
}

pub fn prepare(daily: &Path, population: Option<&Path>, wave: u8, anchor: WeekAnchor, output: &Path) -> Result<()> {
    let mut raw = datapipe::read_daily_csv(daily, &italy::PROVINCE_MERGE)?;
    let pops = match population {
        Some(p) => datapipe::read_population_csv(p)?,
        None => italy::REGIONS.iter().zip(italy::POPULATIONS).map(|(r, p)| (r.to_string(), p)).collect(),
    };
    datapipe::attach_populations(&mut raw, &pops)?;
    let window = match wave {
        1 => WaveWindow::wave_one(),
        2 => WaveWindow::wave_two(),
        w => bail!("unknown wave {w}; use 1 or 2"),
    };
    let weekly = datapipe::aggregate_weekly(&raw, &window, &AggregateOptions { anchor, ..AggregateOptions::default() })?;
    for (region, week) in &weekly.clamped {
        eprintln!("clamped negative weekly count: {region}, week {}", week + 1);
    }
    let names = italy::region_names();
    let panel = if weekly.panel.regions.len() == names.len() {
        datapipe::align_regions(&weekly.panel, &names)?
    } else {
        weekly.panel
    };
    datapipe::write_panel_csv(output, &panel)?;
    eprintln!("wrote {} regions x {} weeks to {}", panel.n_regions(), panel.n_times(), output.display());
    Ok(())
}
