//! Command-line driver: solve single cases, run refinement studies and
//! verification suites, dump envelope demos.

mod config;
mod expr;
mod report;
mod runner;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "translab",
    about = "Monotone finite-difference laboratory for elliptic transmission problems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output root directory (default: $TRANSLAB_OUT_DIR or ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single case and run its configured checks.
    Solve { config: PathBuf },
    /// Solve the case at several grid levels and fit convergence orders.
    Refine {
        config: PathBuf,
        /// Comma-separated cell counts, e.g. 32,64,128.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
    },
    /// Run every case of a suite manifest and aggregate fitted constants.
    Suite { manifest: PathBuf },
    /// Solve a case and dump its tangential envelopes next to the solution.
    EnvelopeDemo { config: PathBuf },
}

fn main() {
    let cli = Cli::parse();
    let out = runner::out_root(cli.out.as_deref());
    let code = match &cli.command {
        Command::Solve { config } => {
            let outcome = runner::run_case(config, &out);
            if let Some(dir) = &outcome.out_dir {
                println!("artifacts in {}", dir.display());
            }
            outcome.exit
        }
        Command::Refine { config, levels } => runner::run_refinement(config, levels, &out),
        Command::Suite { manifest } => runner::run_suite(manifest, &out),
        Command::EnvelopeDemo { config } => runner::run_envelope_demo(config, &out),
    };
    std::process::exit(code);
}
