//! Batch command line for training, evaluating, and simulating transition
//! models, plus dataset generation and imbalance preprocessing.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use careflow::Error;

#[derive(Parser)]
#[command(
    name = "careflow",
    about = "Continuous-time transition modeling: fit, evaluate, simulate, generate, preprocess, sweep",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ImbalanceArg {
    None,
    Weighted,
    Hierarchical,
    Synthetic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BalanceModeArg {
    /// Balance joint (state, duration) classes.
    Joint,
    /// Balance marginal state classes.
    Marginal,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKindArg {
    /// Intensity-based model trained by ADMM.
    PointProcess,
    /// First-order Markov-chain baseline.
    Markov,
}

/// Bandwidth argument: a number of days or `auto` (mean training duration).
#[derive(Clone, Copy, Debug)]
enum SigmaArg {
    Auto,
    Value(f64),
}

impl std::str::FromStr for SigmaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(SigmaArg::Auto);
        }
        s.parse::<f64>()
            .map(SigmaArg::Value)
            .map_err(|_| format!("expected 'auto' or a number of days, got '{s}'"))
    }
}

#[derive(clap::Args)]
struct DataArgs {
    /// Dataset file (line-delimited JSON, one sequence per line).
    #[arg(long)]
    data: PathBuf,
    /// Catalog file; defaults to `<data stem>.catalog.json`.
    #[arg(long)]
    catalog: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SolverArgs {
    /// Group-lasso weight.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// ADMM penalty weight.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Initial gradient step (decays per outer round).
    #[arg(long, default_value_t = 1e-4)]
    beta0: f64,
    /// Relative-change stopping bound.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    max_outer: usize,
    #[arg(long, default_value_t = 500)]
    max_inner: usize,
    /// Mini-batch size for the gradient steps; full batch when omitted.
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(clap::Args)]
struct KernelArgs {
    /// Kernel variant.
    #[arg(long, default_value = "mcp")]
    kernel: careflow::model::KernelVariant,
    /// Gaussian bandwidth in days, or `auto` for the mean training duration.
    #[arg(long, default_value = "auto")]
    sigma: SigmaArg,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and persist it.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Imbalance strategy applied to the training samples.
        #[arg(long, value_enum, default_value_t = ImbalanceArg::None)]
        imbalance: ImbalanceArg,
        /// Class definition used by the synthetic strategy.
        #[arg(long, value_enum, default_value_t = BalanceModeArg::Joint)]
        balance_mode: BalanceModeArg,
        /// Number of cross-validation folds (at least 2); the persisted model
        /// is the element-wise average of the per-fold fits.
        #[arg(long)]
        folds: Option<usize>,
        /// Fraction of samples held out of training; their accuracy is
        /// reported after the fit.
        #[arg(long)]
        holdout: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model family to fit.
        #[arg(long, value_enum, default_value_t = ModelKindArg::PointProcess)]
        model_kind: ModelKindArg,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a model file: per-class and overall accuracy on a dataset.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        /// Model file produced by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// Optional CSV output for the metrics table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Roll a cohort forward and compare simulated to observed occupancy.
    Simulate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        /// Cohort cutoff in days; events up to the cutoff form each subject's
        /// history. Defaults to the latest event time minus the horizon.
        #[arg(long)]
        cutoff: Option<f64>,
        /// Forecast horizon in days.
        #[arg(long, default_value_t = 7)]
        horizon: usize,
        /// Independent simulation rounds to average.
        #[arg(long, default_value_t = 10)]
        rounds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional CSV output for the occupancy matrix.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset from a generator config file.
    Generate {
        /// Generator configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Seed override; defaults to the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Output dataset path; the catalog and manifest are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a preprocessing strategy and export the augmented dataset.
    Preprocess {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        /// Strategy: `none` re-emits the validated dataset, `synthetic` adds
        /// balanced auxiliary records with a provenance marker.
        #[arg(long, value_enum, default_value_t = ImbalanceArg::Synthetic)]
        imbalance: ImbalanceArg,
        #[arg(long, value_enum, default_value_t = BalanceModeArg::Joint)]
        balance_mode: BalanceModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit across a grid of group-lasso weights and tabulate sparsity.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Comma-separated gamma grid.
        #[arg(long, default_value = "0,0.1,1,10")]
        gammas: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional CSV output for the sweep table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Invalid(_) => 2,
        Error::Numeric(_) | Error::Solver { .. } => 3,
        Error::Io { .. } | Error::Format { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit {
            data,
            kernel,
            solver,
            imbalance,
            balance_mode,
            folds,
            holdout,
            seed,
            model_kind,
            out,
        } => commands::fit(
            data,
            kernel,
            solver,
            imbalance,
            balance_mode,
            folds,
            holdout,
            seed,
            model_kind,
            out,
        ),
        Command::Evaluate { data, model, out } => commands::evaluate(data, model, out),
        Command::Simulate {
            data,
            model,
            cutoff,
            horizon,
            rounds,
            seed,
            out,
        } => commands::simulate(data, model, cutoff, horizon, rounds, seed, out),
        Command::Generate { config, seed, out } => commands::generate(config, seed, out),
        Command::Preprocess {
            data,
            kernel,
            imbalance,
            balance_mode,
            seed,
            out,
        } => commands::preprocess(data, kernel, imbalance, balance_mode, seed, out),
        Command::Sweep {
            data,
            kernel,
            solver,
            gammas,
            seed,
            out,
        } => commands::sweep(data, kernel, solver, gammas, seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}
