//! `sensopt simulate`: coverage studies on the simulation scenarios.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use sensopt::bootstrap::{BootstrapSpec, Method};
use sensopt::gridopt::GridParams;
use sensopt::simharness::{gen_iv, gen_regression, run_coverage, ScenarioKind, SimScenario};

use crate::load::emit;

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = |s: &str| s.parse::<ScenarioKind>().map_err(|e| e.to_string()))]
    scenario: ScenarioKind,
    /// Rows per experiment
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Number of experiments
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Bootstrap replicates per experiment
    #[arg(long, default_value_t = 500)]
    boot: usize,
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    /// Interval methods, comma separated
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "percentile",
        value_parser = |s: &str| s.parse::<Method>().map_err(|e| e.to_string())
    )]
    methods: Vec<Method>,
    /// Grid size for every axis of the boundary search
    #[arg(long, default_value_t = 200)]
    grid: usize,
    /// Master seed of the study
    #[arg(long)]
    seed: u64,
    /// CSV output file (the table always goes to standard output)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the observed columns of one `n`-row dataset drawn with `seed` and exit
    #[arg(long)]
    dump_data: Option<PathBuf>,
}

fn dataset_csv(kind: ScenarioKind, n: usize, seed: u64) -> Result<String> {
    let data = match kind {
        ScenarioKind::Regression => gen_regression(n, seed),
        ScenarioKind::Iv => gen_iv(n, seed),
    }
    .select(&kind.observed())?;
    let mut out = data.names().join(",");
    out.push('\n');
    let cols: Vec<&[f64]> = data.names().iter().map(|c| data.column(c).expect("selected column")).collect();
    for r in 0..data.n_rows() {
        let row: Vec<String> = cols.iter().map(|c| c[r].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    if let Some(p) = &args.dump_data {
        return emit(Some(p), &dataset_csv(args.scenario, args.n, args.seed)?);
    }
    let started = Instant::now();
    let scenario = SimScenario {
        kind: args.scenario,
        n: args.n,
        reps: args.reps,
        boot: BootstrapSpec { n_boot: args.boot, level: args.level, method: Method::Percentile, seed: args.seed },
        grid: GridParams::uniform(args.grid),
        methods: args.methods.clone(),
    };
    let report = run_coverage(&scenario)?;
    print!("{}", report.to_table());
    if let Some(p) = &args.output {
        emit(Some(p), &report.to_csv())?;
    }
    eprintln!("simulation finished in {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}
