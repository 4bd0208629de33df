//! `roughvol`: dataset generation, training, calibration, pricing,
//! no-arbitrage scans and the validation experiments.
//!
//! Exit codes: 0 success, 1 other runtime error, 2 bad flags, 3 pricer
//! failure rate above 50% during generation, 4 training divergence, 5 no
//! admissible calibration quotes, 6 missing prerequisites.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "roughvol", version, about = "Rough-volatility pricing, surrogate training and calibration")]
pub struct Cli {
    /// Worker threads (default: available cores). One thread gives
    /// bit-reproducible runs regardless of scheduling.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, env = "ROUGHVOL_OUT", default_value = ".")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a training or test dataset (CSV plus metadata sidecar).
    Generate(GenerateArgs),
    /// Train a network on a dataset.
    Train(TrainArgs),
    /// Calibrate model parameters to a quote file with a trained network.
    Calibrate(CalibrateArgs),
    /// Price calls and implied vols with a model pricer or a network.
    Price(PriceArgs),
    /// Scan a price surface for static-arbitrage violations.
    Scan(ScanArgs),
    /// Validation experiments with plot-ready outputs.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Replay the command line recorded in a run manifest.
    Rerun {
        manifest: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "rheston")]
    pub model: String,
    /// flat, piecewise or parametric.
    #[arg(long, default_value = "flat")]
    pub curve: String,
    /// fixed, adaptive, random-grid, random-smile or pointwise.
    #[arg(long, default_value = "random-grid")]
    pub regime: String,
    /// Parameter sets to draw (grid and smile regimes).
    #[arg(long)]
    pub sets: Option<usize>,
    /// Records to draw (pointwise regime).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo paths per rBergomi parameter set.
    #[arg(long)]
    pub mc_paths: Option<usize>,
    /// Output file stem; derived from the flags when absent.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset CSV written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub patience: usize,
    #[arg(long, default_value_t = 1024)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Weights file written by `train`.
    #[arg(long)]
    pub weights: PathBuf,
    /// Quote CSV with columns T,K,iv.
    #[arg(long)]
    pub quotes: PathBuf,
    /// Random starts besides the box centre.
    #[arg(long, default_value_t = 5)]
    pub multistart: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "calibration")]
    pub name: String,
}

/// Parameters and curve shared by `price` and `scan`.
#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Evaluate a trained network instead of a model pricer.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value = "rheston")]
    pub model: String,
    /// Model parameters, comma separated (H,nu,rho or H,eta,rho). With
    /// --weights, all parameter inputs of the network.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Vec<f64>,
    #[arg(long, default_value = "flat")]
    pub curve: String,
    /// Curve features, comma separated (the level for a flat curve).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub xi: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Single maturity; use with --strikes.
    #[arg(long)]
    pub maturity: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub strikes: Vec<f64>,
    /// Named grid instead of --maturity/--strikes: fixed or adaptive.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value_t = 200_000)]
    pub mc_paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "prices")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct LatticeArgs {
    /// dt = 7/365 and dK = 0.05 instead of the daily, 0.01 lattice.
    #[arg(long)]
    pub coarse: bool,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub dk: Option<f64>,
    /// Tolerance on the strict inequalities, in price units.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub t_min: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[arg(long, default_value = "scan")]
    pub name: String,
}

#[derive(Debug, Subcommand)]
pub enum Experiment {
    /// Out-of-sample error against training size, per regime and seed.
    LearningCurve(LearningCurveArgs),
    /// Calibrate to synthetic flat-curve surfaces with known parameters.
    Controlled(ControlledArgs),
    /// Arbitrage scans of a network at parameters drawn from its box.
    Noarb(NoarbArgs),
    /// Network against reference vols, in and out of sample.
    Fortyfive(FortyfiveArgs),
}

#[derive(Debug, Args)]
pub struct LearningCurveArgs {
    #[arg(long, default_value = "rheston")]
    pub model: String,
    #[arg(long, default_value = "flat")]
    pub curve: String,
    /// Training sizes as powers of two.
    #[arg(long, value_delimiter = ',', default_value = "13,15,17")]
    pub sizes: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "random-smile,pointwise")]
    pub regimes: Vec<String>,
    /// Training seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    /// Seed of the shared training datasets.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 4096)]
    pub test_records: usize,
    #[arg(long, default_value_t = 999)]
    pub test_seed: u64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub patience: usize,
    /// Dataset and network cache (default: <out>/cache).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value = "learning-curve")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct ControlledArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub surfaces: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Benchmark surfaces from the model pricer or the network itself.
    #[arg(long, default_value = "pricer")]
    pub source: String,
    #[arg(long, default_value_t = 5)]
    pub multistart: usize,
    #[arg(long, default_value = "controlled")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct NoarbArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Parameter draws from the network's training box.
    #[arg(long, default_value_t = 10)]
    pub draws: usize,
    /// Shrink the box by this fraction of its width on each side.
    #[arg(long, default_value_t = 0.1)]
    pub interior: f64,
    /// Scan the rHeston pricer at the same parameters as well
    /// (flat-curve rHeston networks only).
    #[arg(long)]
    pub with_pricer: bool,
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "noarb")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct FortyfiveArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// In-sample dataset (typically the training set).
    #[arg(long)]
    pub data: PathBuf,
    /// Out-of-sample dataset.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Cap on the records evaluated per dataset.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "fortyfive")]
    pub name: String,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("roughvol: {e}");
            ExitCode::from(e.code())
        }
    }
}
