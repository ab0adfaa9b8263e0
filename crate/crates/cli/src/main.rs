mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "latro", version, about = "Robust topology optimisation of pin-jointed lattices")]
struct Cli {
    /// Maximum worker threads (default: hardware parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Random seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimise at one weight α.
    Optimize {
        config: PathBuf,
        /// Weight of the mean compliance, overriding the config.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Draw random-field realisations.
    SampleField {
        config: PathBuf,
        #[arg(short = 'n', long, default_value_t = 1)]
        count: usize,
    },
    /// Compare perturbation statistics against Monte Carlo.
    Validate {
        config: PathBuf,
        #[arg(short = 'n', long, default_value_t = 10_000)]
        count: usize,
        /// Design JSON from `optimize`; the uniform start design otherwise.
        #[arg(long)]
        design: Option<PathBuf>,
    },
    /// Trace a Pareto front over α.
    Pareto {
        config: PathBuf,
        /// Comma-separated weights, overriding the config.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Tabulate the penalisation curve.
    PenaltyCurve {
        config: PathBuf,
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let globals = commands::Globals {
        output_dir: cli.output_dir,
        seed: cli.seed,
    };
    let outcome = match cli.command {
        Command::Optimize { config, alpha } => commands::optimize(&globals, &config, alpha),
        Command::SampleField { config, count } => commands::sample_field(&globals, &config, count),
        Command::Validate { config, count, design } => {
            commands::validate(&globals, &config, count, design.as_deref())
        }
        Command::Pareto { config, alphas } => commands::pareto(&globals, &config, alphas),
        Command::PenaltyCurve { config, samples } => commands::penalty_curve(&globals, &config, samples),
    };
    match outcome {
        Ok(commands::Status::Done) => ExitCode::SUCCESS,
        Ok(commands::Status::IterationCap) => {
            eprintln!("warning: iteration limit reached before convergence");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
