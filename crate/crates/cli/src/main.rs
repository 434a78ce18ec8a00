//! `strich`: fit, simulate, evaluate and plot spatio-temporal Richards models.

mod commands;
mod config;
mod files;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use strich::datapipe::WeekAnchor;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "strich", version, about = "Spatio-temporal Richards growth models for weekly counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnchorArg {
    Calendar,
    Window,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write draws, summary, metrics and sampler log.
    Fit {
        /// JSON file with any run setting; flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        run: RunConfig,
    },
    /// Simulate a panel from known parameters, reusing a template's exposures.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        run: RunConfig,
        /// JSON with gamma, beta, alpha, rho, tau.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Keep only the first N weeks of the template.
        #[arg(long)]
        weeks: Option<usize>,
    },
    /// Redraw posterior predictive intervals for a finished fit.
    Predict {
        dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Hold-out and information-criterion metrics for finished fits.
    Evaluate {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write every record into one JSON array.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Print the parameter table of a finished fit.
    Summarize {
        dir: PathBuf,
        /// Include the random effects.
        #[arg(long)]
        all: bool,
    },
    /// Write curve, heatmap and per-region SVG figures for a finished fit.
    Plot { dir: PathBuf },
    /// Build a weekly panel CSV from the daily regional dataset.
    Prepare {
        #[arg(long)]
        daily: PathBuf,
        /// region,population CSV; defaults to the bundled estimates.
        #[arg(long)]
        population: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        wave: u8,
        #[arg(long, value_enum, default_value = "calendar")]
        anchor: AnchorArg,
        #[arg(long)]
        output: PathBuf,
    },
}

fn layered(config: Option<&Path>, run: RunConfig) -> Result<config::Resolved> {
    let base = match config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    run.over(base).resolve()
}

/// Runs `f` with `dir` as its output directory, leaving a failure marker
/// behind if it errors.
fn in_out_dir(dir: &Path, f: impl FnOnce() -> Result<()>) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let marker = dir.join(files::FAILED);
    if marker.exists() {
        std::fs::remove_file(&marker).with_context(|| format!("removing {}", marker.display()))?;
    }
    let result = f();
    if let Err(e) = &result {
        let _ = std::fs::write(&marker, format!("{e:#}\n"));
    }
    result
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { config, run } => {
            let cfg = layered(config.as_deref(), run)?;
            let out = cfg.out.clone();
            in_out_dir(&out, || commands::fit(cfg))
        }
        Command::Simulate { config, run, truth, weeks } => {
            let cfg = layered(config.as_deref(), run)?;
            let out = cfg.out.clone();
            in_out_dir(&out, || commands::simulate(cfg, truth.as_deref(), weeks))
        }
        Command::Predict { dir, seed } => in_out_dir(&dir, || commands::predict(&dir, seed)),
        Command::Evaluate { dirs, table } => commands::evaluate(&dirs, table.as_deref()),
        Command::Summarize { dir, all } => commands::summarize(&dir, all),
        Command::Plot { dir } => in_out_dir(&dir, || commands::plot(&dir)),
        Command::Prepare { daily, population, wave, anchor, output } => {
            let anchor = match anchor {
                AnchorArg::Calendar => WeekAnchor::Calendar,
                AnchorArg::Window => WeekAnchor::WindowStart,
            };
            commands::prepare(&daily, population.as_deref(), wave, anchor, &output)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
