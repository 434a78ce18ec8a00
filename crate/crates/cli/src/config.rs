use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use strich::model::{GraphId, TrendMode};
use strich::richards::TrendFormula;
use strich::sampler::{NutsConfig, SamplingVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    M0,
    M1,
    M2,
}

impl ModelKind {
    pub fn graph_id(self) -> GraphId {
        match self {
            Self::M0 => GraphId::M0,
            Self::M1 => GraphId::M1,
            Self::M2 => GraphId::M2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TrendArg {
    Common,
    Regional,
}

impl From<TrendArg> for TrendMode {
    fn from(t: TrendArg) -> Self {
        match t {
            TrendArg::Common => TrendMode::Common,
            TrendArg::Regional => TrendMode::Regional,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FormulaArg {
    Exact,
    Linear,
}

impl From<FormulaArg> for TrendFormula {
    fn from(f: FormulaArg) -> Self {
        match f {
            FormulaArg::Exact => TrendFormula::ExactDiff,
            FormulaArg::Linear => TrendFormula::Linearized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Multinomial,
    Slice,
}

impl From<VariantArg> for SamplingVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Multinomial => SamplingVariant::Multinomial,
            VariantArg::Slice => SamplingVariant::Slice,
        }
    }
}

/// Run settings, from flags or a JSON file. Every field is optional so the
/// two sources can be layered, flags on top.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Panel CSV (region,week,count,population,swabs).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Graph CSV: dense matrix or 1-based edge list i,j,weight.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    #[arg(long, value_enum)]
    pub trend: Option<TrendArg>,
    #[arg(long, value_enum)]
    pub formula: Option<FormulaArg>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Iterations per chain, warm-up included.
    #[arg(long)]
    pub iter: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fraction of weeks per region to hold out, in (0, 0.5).
    #[arg(long)]
    pub holdout: Option<f64>,
    #[arg(long)]
    pub target_accept: Option<f64>,
    #[arg(long)]
    pub max_tree_depth: Option<usize>,
    #[arg(long, value_enum)]
    pub sampler: Option<VariantArg>,
    /// Treat the graph file as a flow matrix and dichotomize it.
    #[arg(long)]
    pub dichotomize: Option<bool>,
    /// Standardize covariates before fitting (default true).
    #[arg(long)]
    pub standardize: Option<bool>,
    /// Free-form label copied into the metrics record.
    #[arg(long)]
    pub label: Option<String>,
    /// Print sampler progress to standard error.
    #[arg(long)]
    pub progress: Option<bool>,
}

macro_rules! layer {
    ($top:expr, $base:expr, $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($base.$f),)* }
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// `self` wins wherever it has a value.
    pub fn over(self, base: RunConfig) -> RunConfig {
        layer!(
            self, base, data, graph, out, model, trend, formula, chains, iter, warmup, seed, holdout, target_accept,
            max_tree_depth, sampler, dichotomize, standardize, label, progress
        )
    }

    pub fn resolve(self) -> Result<Resolved> {
        let defaults = NutsConfig::default();
        let data = self.data.context("--data is required")?;
        let out = self.out.context("--out is required")?;
        let model = self.model.unwrap_or(ModelKind::M1);
        if model != ModelKind::M0 && self.graph.is_none() {
            bail!("model {model:?} needs --graph");
        }
        let nuts = NutsConfig {
            n_chains: self.chains.unwrap_or(defaults.n_chains),
            n_iter: self.iter.unwrap_or(defaults.n_iter),
            n_warmup: self.warmup.unwrap_or_else(|| self.iter.map_or(defaults.n_warmup, |n| n / 2)),
            target_accept: self.target_accept.unwrap_or(defaults.target_accept),
            max_tree_depth: self.max_tree_depth.unwrap_or(defaults.max_tree_depth),
            divergence_threshold: defaults.divergence_threshold,
            seed: self.seed.unwrap_or(defaults.seed),
            variant: self.sampler.map_or(defaults.variant, Into::into),
            progress: self.progress.unwrap_or(false),
        };
        nuts.validate()?;
        let label = self.label.unwrap_or_else(|| format!("{model:?}").to_lowercase());
        Ok(Resolved {
            data,
            graph: if model == ModelKind::M0 { None } else { self.graph },
            out,
            model,
            trend: self.trend.unwrap_or(TrendArg::Common),
            formula: self.formula.unwrap_or(FormulaArg::Linear),
            holdout: self.holdout,
            dichotomize: self.dichotomize.unwrap_or(false),
            standardize: self.standardize.unwrap_or(true),
            label,
            nuts,
        })
    }
}

/// Fully specified run, stored as `config.json` next to the artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub data: PathBuf,
    pub graph: Option<PathBuf>,
    pub out: PathBuf,
    pub model: ModelKind,
    pub trend: TrendArg,
    pub formula: FormulaArg,
    pub holdout: Option<f64>,
    pub dichotomize: bool,
    pub standardize: bool,
    pub label: String,
    pub nuts: NutsConfig,
}

impl Resolved {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(crate::files::CONFIG);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("missing fit artifact {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
