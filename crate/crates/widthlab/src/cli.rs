//! Command-line interface.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use widthlab_core::model::Activation;

use crate::config::{parse_list, ExperimentConfig};
use crate::experiments;
use crate::records::{write_csv, Record};
use crate::svg::{write_plot, PlotKind};

#[derive(Debug, Parser)]
#[command(name = "widthlab", version, about = "Width sweeps for mean-field variational BNNs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the standardized dataset to `dataset.csv`.
    Dataset(Common),
    /// Train every (width, seed) cell; writes `convergence.csv` and `timings.csv`.
    Converge(Common),
    /// Train one network and compare it with the prior and the NNGP; writes `posterior.csv`.
    Posterior(Common),
    /// Prior moments and upcrossings per width; writes `prior_moments.csv`,
    /// `upcrossings.csv` and `upcrossing_summary.csv`.
    PriorCheck(Common),
    /// Quantiles of the trained variational parameters; writes `param_density.csv`.
    ParamDensity(Common),
    /// Bound quantities on the grid for one erf network; writes `bound_check.csv`.
    BoundCheck(Common),
    /// Render a CSV as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// INI configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Width for single-run commands.
    #[arg(long)]
    pub width: Option<usize>,
    /// Seed for single-run commands and data generation.
    #[arg(long, env = "WIDTHLAB_SEED")]
    pub seed: Option<u64>,
    /// Comma-separated widths for sweeps.
    #[arg(long)]
    pub widths: Option<String>,
    /// Comma-separated seeds for sweeps.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long, value_parser = ["erf", "tanh", "relu"])]
    pub activation: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// CSV written by one of the other commands.
    pub csv: PathBuf,
    /// convergence | convergence-var | predictive | upcrossings
    #[arg(long)]
    pub kind: PlotKind,
    /// Output directory; the SVG is named after the CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    /// The configuration file (or defaults) with command-line overrides applied.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_path(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(w) = self.width {
            cfg.width = w;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = &self.widths {
            cfg.widths = parse_list(w).map_err(anyhow::Error::msg).context("--widths")?;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_list(s).map_err(anyhow::Error::msg).context("--seeds")?;
        }
        if let Some(a) = &self.activation {
            cfg.activation = a.parse::<Activation>()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write<R: Record>(dir: &Path, name: &str, rows: &[R]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_csv(&dir.join(name), rows)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Plot(args) => {
            let dir = args.out.unwrap_or_else(|| args.csv.parent().map(Path::to_path_buf).unwrap_or_default());
            fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let stem = args.csv.file_stem().context("CSV path has no file name")?;
            let mut name = stem.to_os_string();
            name.push(".svg");
            write_plot(&args.csv, args.kind, &dir.join(name))
        }
        Command::Dataset(c) => {
            let cfg = c.resolve()?;
            let rows = experiments::dataset_rows(&experiments::dataset(&cfg)?)?;
            write(&cfg.output_dir, "dataset.csv", &rows)
        }
        Command::Converge(c) => {
            let cfg = c.resolve()?;
            let out = experiments::run_convergence(&cfg, c.jobs)?;
            write(&cfg.output_dir, "convergence.csv", &out.runs)?;
            write(&cfg.output_dir, "timings.csv", &out.timings)
        }
        Command::Posterior(c) => {
            let cfg = c.resolve()?;
            let out = in_pool(c.jobs, || experiments::run_posterior(&cfg))?;
            write(&cfg.output_dir, "posterior.csv", &out.rows)?;
            if cfg.predictive.n_functions > 0 {
                write(&cfg.output_dir, "posterior_functions.csv", &out.functions)?;
            }
            Ok(())
        }
        Command::PriorCheck(c) => {
            let cfg = c.resolve()?;
            let out = in_pool(c.jobs, || experiments::run_prior_check(&cfg))?;
            write(&cfg.output_dir, "prior_moments.csv", &out.moments)?;
            write(&cfg.output_dir, "upcrossings.csv", &out.bins)?;
            write(&cfg.output_dir, "upcrossing_summary.csv", &out.summary)
        }
        Command::ParamDensity(c) => {
            let cfg = c.resolve()?;
            let rows = in_pool(c.jobs, || experiments::run_param_density(&cfg))?;
            write(&cfg.output_dir, "param_density.csv", &rows)
        }
        Command::BoundCheck(c) => {
            let cfg = c.resolve()?;
            let rows = in_pool(c.jobs, || experiments::run_bound_check(&cfg))?;
            write(&cfg.output_dir, "bound_check.csv", &rows)
        }
    }
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?.install(f)
}

/// Parses `args` and runs the selected command.
pub fn main_with<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run(Cli::parse_from(args))
}
