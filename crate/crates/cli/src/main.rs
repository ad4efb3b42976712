//! Command-line front end: `analyze`, `contour` and `simulate`.
//!
//! Exit status is 0 on success, 2 when the sensitivity model is infeasible
//! at the point estimate, and 1 for any other error.

mod analyze;
mod contour;
mod load;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sensopt", version, about = "Sensitivity analysis for unmeasured confounding")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the partially identified region and sensitivity intervals
    Analyze(analyze::AnalyzeArgs),
    /// Write contour grids and comparison points
    Contour(contour::ContourArgs),
    /// Run a coverage study on simulated data
    Simulate(simulate::SimulateArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    match &cli.command {
        Command::Analyze(a) => analyze::run(a),
        Command::Contour(a) => contour::run(a),
        Command::Simulate(a) => simulate::run(a),
    }
}

fn is_infeasible(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| matches!(c.downcast_ref::<sensopt::Error>(), Some(sensopt::Error::ModelInfeasibleOnSample)))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_infeasible(&e) { 2 } else { 1 })
        }
    }
}
