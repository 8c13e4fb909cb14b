//! Command-line front end: simulate, fit, tune and summarize.

mod commands;
mod error;
mod fitdir;
mod io;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use error::{CliError, CliResult};
use settings::{resolve, ModelSettings, PriorProbSettings, SimulateSettings, SummarizeSettings};

#[derive(Parser)]
#[command(
    name = "mixsel",
    version,
    about = "Spike-and-slab spline regression for exposure mixtures",
    args_override_self = true
)]
struct Cli {
    /// TOML file of settings; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Replace an existing output directory.
    #[arg(long)]
    force: bool,
}

#[derive(clap::Args)]
struct OptOutArgs {
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace an existing output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from a simulation scenario.
    Simulate {
        #[command(flatten)]
        settings: SimulateSettings,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fit the model at one degrees-of-freedom value.
    Fit {
        #[command(flatten)]
        settings: ModelSettings,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fit over a degrees-of-freedom grid and pick the smallest WAIC.
    SelectDf {
        #[command(flatten)]
        settings: ModelSettings,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Permutation lower bound on the slab variance.
    LowerBound {
        #[command(flatten)]
        settings: ModelSettings,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Extend the chains of a fit directory.
    Resume {
        /// Fit directory to continue.
        #[arg(long)]
        fit: PathBuf,
        /// Total iterations per chain after resuming.
        #[arg(long)]
        iters: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Exposure-response curves, surfaces, set probabilities and predictions
    /// from a fit directory (written to `<fit>/summary` by default).
    Summarize {
        #[command(flatten)]
        settings: SummarizeSettings,
        #[command(flatten)]
        out: OptOutArgs,
    },
    /// Prior probability that no function holds a given j-way interaction.
    PriorProb {
        #[command(flatten)]
        settings: PriorProbSettings,
        #[command(flatten)]
        out: OptOutArgs,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let config = cli.config.as_deref();
    match cli.command {
        Command::Simulate { settings, out } => {
            commands::simulate(resolve(&settings, config)?, &out.out, out.force)
        }
        Command::Fit { settings, out } => {
            commands::fit(resolve(&settings, config)?, &out.out, out.force)
        }
        Command::SelectDf { settings, out } => {
            commands::select_df(resolve(&settings, config)?, &out.out, out.force)
        }
        Command::LowerBound { settings, out } => {
            commands::lower_bound(resolve(&settings, config)?, &out.out, out.force)
        }
        Command::Resume { fit, iters, out } => commands::resume(&fit, iters, &out.out, out.force),
        Command::Summarize { settings, out } => {
            commands::summarize(resolve(&settings, config)?, out.out, out.force)
        }
        Command::PriorProb { settings, out } => {
            commands::prior_prob(resolve(&settings, config)?, out.out, out.force)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
