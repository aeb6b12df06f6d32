use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trellis_cli::run::{self, CliArgs};

/// Stress-constrained mass minimization of 2D lattice structures with
/// port-reduced static condensation.
#[derive(Parser)]
#[command(name = "trellis", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML); built-in desk defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Component library file: output of `train`, input everywhere else.
    #[arg(long, global = true, value_name = "PATH")]
    library: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Force the untruncated static-condensation model.
    #[arg(long, global = true)]
    fom: bool,
    /// Force the monolithic full-order finite element model.
    #[arg(long, global = true)]
    oracle: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a reduced component library and save it to disk.
    Train,
    /// One forward solve with an accuracy and timing report.
    Solve,
    /// Minimize mass under the aggregated stress bound (needs a library).
    Optimize,
    /// Extract and validate a black-and-white design from a density field.
    Postprocess,
    /// Grid of optimizations, e.g. `sweep p=10,15 n_agg=1,5`.
    Sweep {
        /// `key=v1,v2,...` lists; supported keys: p, n_agg.
        #[arg(required = true)]
        grid: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = CliArgs {
        config: cli.config,
        library: cli.library,
        out: cli.out,
        seed: cli.seed,
        fom: cli.fom,
        oracle: cli.oracle,
    };
    let outcome = match &cli.command {
        Command::Train => run::cmd_train(&args),
        Command::Solve => run::cmd_solve(&args),
        Command::Optimize => run::cmd_optimize(&args),
        Command::Postprocess => run::cmd_postprocess(&args),
        Command::Sweep { grid } => run::cmd_sweep(&args, grid),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
