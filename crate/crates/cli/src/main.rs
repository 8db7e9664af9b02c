//! `chromfit`: dataset generation, network training and evaluation, prediction,
//! cross-validation, grid search and variational fitting.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::TrainArgs;

/// Validation failure raised by the command layer itself.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Debug, Parser)]
#[command(name = "chromfit", version, about = "Bi-Langmuir isotherm estimation from chromatograms")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a synthetic dataset.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the first four chromatograms as `t,response` CSVs.
        #[arg(long)]
        plot_data: bool,
    },
    /// Add a measured chromatogram to a dataset, regridded onto its time grid.
    ImportReal {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        chromatogram: PathBuf,
        #[arg(long, value_delimiter = ',')]
        injection: Vec<f64>,
        /// Reference parameters, if known (8 values).
        #[arg(long, value_delimiter = ',')]
        target: Option<Vec<f64>>,
    },
    /// Split, normalize and train a network.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Shift every synthetic response by a random lag in {-m..m} first.
        #[arg(long, default_value_t = 0)]
        augment_shift: u32,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// R² of a trained model, overall and per parameter.
    Evaluate {
        /// Output directory of `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Which samples: the training run's `test`, `train` or `validation` set, or `all`.
        #[arg(long, default_value = "test")]
        set: String,
        /// Corruption applied first, e.g. `normal:0.04:0.1` or `shift:1`.
        #[arg(long)]
        noise: Option<String>,
        #[arg(long, default_value_t = 0)]
        noise_seed: u64,
        /// Interpolate responses onto the model's time grid when grids differ.
        #[arg(long)]
        regrid: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the eight parameters for one chromatogram.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        chromatogram: PathBuf,
        #[arg(long, value_delimiter = ',')]
        injection: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one injection and write its chromatogram.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Eight parameters `aI1,bI1,aII1,bII1,aI2,bI2,aII2,bII2`.
        #[arg(long, value_delimiter = ',')]
        params: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        injection: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Write per-component outlet concentrations instead of the response.
        #[arg(long)]
        outlet: bool,
    },
    /// Weighted least-squares fit of the parameters to observed chromatograms.
    FitVariational {
        /// Observation as `FILE:H1,H2`; repeat for several injections.
        #[arg(long = "obs", required = true)]
        observations: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Starting point (8 values).
        #[arg(long, value_delimiter = ',')]
        initial: Option<Vec<f64>>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Objective components of the variational fit across a log grid of alpha.
    AlphaSweep {
        #[arg(long = "obs", required = true)]
        observations: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = -8.0, allow_hyphen_values = true)]
        log_min: f64,
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        log_max: f64,
        #[arg(long, default_value_t = 7)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// k-fold cross-validation of one hyperparameter set.
    CrossValidate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train every combination of the candidate lists and rank them.
    GridSearch {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Rows kept per hidden structure in `grid.csv`.
        #[arg(long, default_value_t = 2)]
        top: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<chromfit::Error>() {
            return if e.is_io() {
                4
            } else if e.is_numerical() {
                3
            } else {
                2
            };
        }
        if cause.is::<Invalid>() {
            return 2;
        }
        if cause.is::<std::io::Error>() {
            return 4;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
