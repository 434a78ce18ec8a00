use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and standard deviation used to standardize one covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub sd: f64,
}

impl Standardization {
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }
}

/// Region × week count panel.
///
/// `counts[g][t]` is ignored wherever `observed[g][t]` is false.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountPanel {
    pub regions: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    /// `ln E_g`, the log exposure of each region.
    pub offset_log: Vec<f64>,
    /// `covariates[g][t][k]`.
    pub covariates: Vec<Vec<Vec<f64>>>,
    pub covariate_names: Vec<String>,
    pub observed: Vec<Vec<bool>>,
    /// Constants of the standardization already applied, if any.
    #[serde(default)]
    pub standardization: Option<Vec<Standardization>>,
}

impl CountPanel {
    /// Panel without covariates with every cell observed.
    pub fn new(regions: Vec<String>, counts: Vec<Vec<u64>>, offset_log: Vec<f64>) -> Result<Self> {
        let n_times = counts.first().map_or(0, Vec::len);
        let panel = Self {
            covariates: vec![vec![Vec::new(); n_times]; counts.len()],
            observed: vec![vec![true; n_times]; counts.len()],
            covariate_names: Vec::new(),
            standardization: None,
            regions,
            counts,
            offset_log,
        };
        panel.validate()?;
        Ok(panel)
    }

    pub fn n_regions(&self) -> usize {
        self.counts.len()
    }

    pub fn n_times(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_observed(&self) -> usize {
        self.observed.iter().flatten().filter(|&&o| o).count()
    }

    pub fn validate(&self) -> Result<()> {
        let (g, t, k) = (self.n_regions(), self.n_times(), self.n_covariates());
        if g == 0 || t == 0 {
            return Err(Error::Data("panel has no cells".into()));
        }
        if self.regions.len() != g || self.offset_log.len() != g {
            return Err(Error::Data(format!(
                "panel has {g} count rows but {} region names and {} offsets",
                self.regions.len(),
                self.offset_log.len()
            )));
        }
        if self.counts.iter().any(|r| r.len() != t) || self.observed.len() != g
            || self.observed.iter().any(|r| r.len() != t)
        {
            return Err(Error::Data("ragged count or mask rows".into()));
        }
        if self.covariates.len() != g
            || self.covariates.iter().any(|r| r.len() != t || r.iter().any(|c| c.len() != k))
        {
            return Err(Error::Data(format!("covariate array must be {g} x {t} x {k}")));
        }
        if let Some(bad) = self.offset_log.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("offset of region {} is not finite", self.regions[bad])));
        }
        if self.covariates.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("covariates must be finite".into()));
        }
        Ok(())
    }

    /// Copy of the panel with a different observation mask.
    pub fn with_mask(&self, observed: Vec<Vec<bool>>) -> Result<Self> {
        let mut out = self.clone();
        out.observed = observed;
        out.validate()?;
        Ok(out)
    }

    /// Standardizes every covariate to mean 0 and sd 1 over the observed cells.
    ///
    /// A panel that has already been standardized is left untouched, so the
    /// stored constants stay the ones from the first call.
    pub fn standardize_covariates(&mut self) -> Result<&[Standardization]> {
        if self.standardization.is_none() {
            let mut constants = Vec::with_capacity(self.n_covariates());
            for k in 0..self.n_covariates() {
                let vals: Vec<f64> = self.observed_cells().map(|(g, t)| self.covariates[g][t][k]).collect();
                if vals.len() < 2 {
                    return Err(Error::Data("need at least two observed cells to standardize".into()));
                }
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                if !(sd > 0.0) {
                    return Err(Error::Data(format!(
                        "covariate {} is constant and cannot be standardized",
                        self.covariate_names[k]
                    )));
                }
                constants.push(Standardization { mean, sd });
            }
            for row in &mut self.covariates {
                for cell in row {
                    for (v, c) in cell.iter_mut().zip(&constants) {
                        *v = c.apply(*v);
                    }
                }
            }
            self.standardization = Some(constants);
        }
        Ok(self.standardization.as_deref().unwrap_or(&[]))
    }

    pub fn observed_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells().filter(|&(g, t)| self.observed[g][t])
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let t = self.n_times();
        (0..self.n_regions()).flat_map(move |g| (0..t).map(move |w| (g, w)))
    }
}
