use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::gmrf::carar_prior_sample;
use crate::graph::SpatialGraph;
use crate::model::{expected_counts, CountPanel, ModelSpec, ParamBlock};

/// Largest expected count accepted by the simulator.
const MAX_MEAN: f64 = 1e12;

/// A simulated panel and the parameters (random effects included) that
/// generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub panel: CountPanel,
    pub truth: ParamBlock<f64>,
}

/// Draws `φ` from the CAR-AR prior of `truth.car.params`, then Poisson
/// counts. Offsets and covariates come from `template`; its counts are
/// replaced and every cell is marked observed.
pub fn simulate_panel<R: Rng + ?Sized>(
    template: &CountPanel,
    truth: &ParamBlock<f64>,
    spec: &ModelSpec,
    graph: &SpatialGraph<f64>,
    rng: &mut R,
) -> Result<SimulatedPanel> {
    let mut truth = truth.clone();
    truth.car.phi = carar_prior_sample(rng, &truth.car.params, graph, spec.n_times)?;
    let panel = simulate_with_phi(template, &truth, spec, rng)?;
    Ok(SimulatedPanel { panel, truth })
}

/// Poisson counts for fixed parameters, random effects included.
pub fn simulate_with_phi<R: Rng + ?Sized>(
    template: &CountPanel,
    params: &ParamBlock<f64>,
    spec: &ModelSpec,
    rng: &mut R,
) -> Result<CountPanel> {
    let mut panel = template.clone();
    panel.observed = vec![vec![true; template.n_times()]; template.n_regions()];
    let mu = expected_counts(params, &panel, spec)?;
    for (g, row) in mu.iter().enumerate() {
        for (t, &m) in row.iter().enumerate() {
            if !(m <= MAX_MEAN) {
                return Err(Error::Domain(format!("expected count {m:e} in cell ({g}, {t}) overflows")));
            }
            panel.counts[g][t] = if m > 0.0 {
                Poisson::new(m).map_err(|e| Error::Domain(e.to_string()))?.sample(rng) as u64
            } else {
                0
            };
        }
    }
    Ok(panel)
}
