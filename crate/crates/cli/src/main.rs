mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{ArgAction, Parser, Subcommand};

use commands::{BenchArgs, EvaluateArgs, FitArgs, GroupArgs, PredictArgs, SimulateArgs};

/// Correlation-grouped elastic-net models for single-cell expression data.
#[derive(Debug, Parser)]
#[command(name = "corrgroup", version, propagate_version = true)]
struct Cli {
    /// Worker threads [default: available cores]
    #[arg(long, global = true, env = "CORRGROUP_THREADS")]
    threads: Option<usize>,

    /// Print progress to stderr; repeat for more detail. CORRGROUP_LOG
    /// accepts a full log filter and takes precedence.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pre-group genes and cut the dendrograms at one threshold
    Group(GroupArgs),
    /// Select a threshold by cross-validated AUC and fit the final model
    Fit(FitArgs),
    /// Predict phenotype probabilities for new cells
    Predict(PredictArgs),
    /// Generate synthetic expression, a blueprint and replicate phenotypes
    Simulate(SimulateArgs),
    /// Score fitted models against a simulation truth
    Evaluate(EvaluateArgs),
    /// Run the grouped vs ungrouped benchmark on a synthetic design
    Bench(BenchArgs),
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CORRGROUP_LOG", default))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_VALIDATION),
            };
        }
    };
    init_logging(cli.verbose);

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_VALIDATION);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }

    let result = match &cli.command {
        Command::Group(a) => commands::group(a),
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if commands::is_validation(&e) {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
