//! Joint model: Poisson counts with log-mean
//! `ln E_g + φ_gt + ln λ_γ(g)(t) + x_gtᵀβ` (no intercept), Richards trend
//! priors, and the CAR-AR random-effect stack.

mod density;
mod layout;
mod panel;

pub use density::{
    expected_counts, log_likelihood, log_prior, pointwise_log_likelihood, Posterior,
};
pub use layout::Layout;
pub use panel::{CountPanel, Standardization};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmrf::CarArState;
use crate::richards::{RichardsParams, TrendFormula};
use crate::scalar::Real;

/// One curve shared by all regions, or one curve per region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendMode {
    #[default]
    Common,
    Regional,
}

/// Which adjacency the spatial prior uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphId {
    /// No edges; spatially independent regions.
    M0,
    /// Dichotomized transport-flow graph.
    M1,
    /// Shared land border graph.
    M2,
    #[default]
    Custom,
}

/// Prior constants. Normal priors are given by their standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Standard deviation of the normal priors on `ln b` and `ln r`.
    pub log_scale_sd: f64,
    /// Standard deviation of the normal priors on `ln h` and `ln s`.
    pub log_rate_sd: f64,
    /// Mean of the prior on `p`; `None` means `T / 2`.
    pub p_mean: Option<f64>,
    /// Standard deviation of the prior on `p`; `None` means `T / (2 · 1.96)`.
    pub p_sd: Option<f64>,
    /// Beta prior on `α`.
    pub alpha_shape: (f64, f64),
    /// Gamma prior (shape, rate) on the precision `τ`.
    pub tau_shape_rate: (f64, f64),
    /// Standard deviation of the normal prior on each regression coefficient.
    pub beta_sd: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            log_scale_sd: 10.0,
            log_rate_sd: 1.0,
            p_mean: None,
            p_sd: None,
            alpha_shape: (0.5, 0.5),
            tau_shape_rate: (2.0, 2.0),
            beta_sd: 10.0,
        }
    }
}

impl PriorConfig {
    pub fn p_mean_for(&self, n_times: usize) -> f64 {
        self.p_mean.unwrap_or(n_times as f64 / 2.0)
    }

    pub fn p_sd_for(&self, n_times: usize) -> f64 {
        self.p_sd.unwrap_or(n_times as f64 / (2.0 * 1.96))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub trend_mode: TrendMode,
    pub trend_formula: TrendFormula,
    pub graph_id: GraphId,
    pub n_covariates: usize,
    pub n_times: usize,
    pub n_regions: usize,
    pub priors: PriorConfig,
}

impl ModelSpec {
    pub fn new(n_regions: usize, n_times: usize, n_covariates: usize) -> Result<Self> {
        let spec = Self {
            trend_mode: TrendMode::Common,
            trend_formula: TrendFormula::Linearized,
            graph_id: GraphId::Custom,
            n_covariates,
            n_times,
            n_regions,
            priors: PriorConfig::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn for_panel(panel: &CountPanel) -> Result<Self> {
        Self::new(panel.n_regions(), panel.n_times(), panel.n_covariates())
    }

    pub fn with_trend(mut self, mode: TrendMode, formula: TrendFormula) -> Self {
        self.trend_mode = mode;
        self.trend_formula = formula;
        self
    }

    pub fn with_graph_id(mut self, id: GraphId) -> Self {
        self.graph_id = id;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_times < 2 {
            return Err(Error::Data(format!("need at least 2 weeks, got {}", self.n_times)));
        }
        if self.n_regions < 1 {
            return Err(Error::Data("need at least one region".into()));
        }
        Ok(())
    }

    pub fn n_curves(&self) -> usize {
        match self.trend_mode {
            TrendMode::Common => 1,
            TrendMode::Regional => self.n_regions,
        }
    }

    /// Index of the curve driving region `g`.
    #[inline]
    pub fn curve_of(&self, g: usize) -> usize {
        match self.trend_mode {
            TrendMode::Common => 0,
            TrendMode::Regional => g,
        }
    }
}

/// All model parameters on their natural scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock<T> {
    /// One curve (common mode) or one per region.
    pub gamma: Vec<RichardsParams<T>>,
    pub beta: Vec<T>,
    pub car: CarArState<T>,
}

impl<T: Real> ParamBlock<T> {
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if self.gamma.len() != spec.n_curves() {
            return Err(Error::Domain(format!(
                "expected {} curve(s), got {}",
                spec.n_curves(),
                self.gamma.len()
            )));
        }
        for c in &self.gamma {
            c.validate()?;
        }
        if self.beta.len() != spec.n_covariates {
            return Err(Error::Domain(format!(
                "expected {} coefficients, got {}",
                spec.n_covariates,
                self.beta.len()
            )));
        }
        if self.car.phi.len() != spec.n_times || self.car.phi.iter().any(|v| v.len() != spec.n_regions) {
            return Err(Error::Domain(format!(
                "random effects must be {} weeks x {} regions",
                spec.n_times, spec.n_regions
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn curve_for(&self, spec: &ModelSpec, g: usize) -> &RichardsParams<T> {
        &self.gamma[spec.curve_of(g)]
    }
}
