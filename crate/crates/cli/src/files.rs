//! Artifact file names inside an output directory.

pub const CONFIG: &str = "config.json";
pub const DRAWS: &str = "draws.csv";
pub const DRAWS_RAW: &str = "draws_unconstrained.csv";
pub const SUMMARY: &str = "summary.json";
pub const METRICS: &str = "metrics.json";
pub const LOG: &str = "sampler_log.jsonl";
pub const PREDICTIVE: &str = "predictive.csv";
pub const HOLDOUT: &str = "holdout.json";
pub const PANEL: &str = "panel.csv";
pub const TRUTH: &str = "truth.json";
pub const CURVE_SVG: &str = "curve.svg";
pub const HEATMAP_SVG: &str = "phi_heatmap.svg";
pub const FIT_SVG: &str = "region_fit.svg";
/// Written when a command fails after it started writing.
pub const FAILED: &str = "FAILED";
