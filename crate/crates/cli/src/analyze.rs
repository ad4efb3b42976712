//! `sensopt analyze`: plug-in region plus sensitivity intervals.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use sensopt::bootstrap::{
    assemble_interval, bootstrap_distribution, heuristic_interval, jackknife, BootstrapSpec, Method, Replicates,
    SensitivityInterval,
};
use sensopt::config::{AnalysisConfig, OutputFormat};
use sensopt::estimands::{EstimableParams, SensitivityPoint};
use sensopt::pipeline::Analysis;
use sensopt::sensmodel::CompiledConstraints;

use crate::load::{emit, load_config, load_data};

#[derive(Debug, clap::Args)]
pub struct AnalyzeArgs {
    /// TOML config, or a JSON result document to re-run
    #[arg(long)]
    config: PathBuf,
    /// Output file; overrides `output.path` (standard output when neither is set)
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the bootstrap replicate endpoints as CSV
    #[arg(long)]
    replicates: Option<PathBuf>,
}

#[derive(Serialize)]
struct Region {
    lower: Option<f64>,
    upper: Option<f64>,
    argmin: Option<SensitivityPoint>,
    argmax: Option<SensitivityPoint>,
    missing_slices: usize,
}

#[derive(Serialize)]
#[serde(untagged)]
enum IntervalReport {
    Done(SensitivityInterval),
    Failed { method: Method, level: f64, error: String },
}

#[derive(Serialize)]
struct Diagnostics {
    n_boot: usize,
    infeasible_replicates_lower: usize,
    infeasible_replicates_upper: usize,
}

/// The result document. Infinite interval ends are written as `null`.
#[derive(Serialize)]
struct ResultDoc<'a> {
    config: &'a AnalysisConfig,
    n: usize,
    variables: Vec<String>,
    theta: &'a EstimableParams,
    constraints: &'a CompiledConstraints,
    region: Region,
    intervals: Vec<IntervalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<Diagnostics>,
}

pub fn run(args: &AnalyzeArgs) -> Result<()> {
    let started = Instant::now();
    let mut cfg = load_config(&args.config)?;
    if let Some(p) = &args.output {
        cfg.output.path = Some(std::path::absolute(p)?);
    }
    let data = load_data(&cfg)?;
    let analysis = Analysis::new(cfg.roles.roles()?, cfg.sensitivity_model()?, cfg.grid);
    let solved = analysis.solve(data.cov.clone())?;
    let point = solved.endpoints()?;

    let mut intervals = Vec::new();
    let mut diagnostics = None;
    if let Some(bc) = &cfg.bootstrap {
        let needs_reps = bc.methods.iter().any(|m| m.is_bootstrap());
        let reps = match (&data.rows, needs_reps) {
            (Some(rows), true) => {
                let spec = BootstrapSpec { n_boot: bc.n_boot, level: bc.level, method: Method::Percentile, seed: bc.seed };
                Some(bootstrap_distribution(rows, &analysis, &spec)?)
            }
            _ => None,
        };
        let jack = match (&data.rows, bc.methods.contains(&Method::Bca)) {
            (Some(rows), true) => Some(jackknife(rows, &analysis)?),
            _ => None,
        };
        for &m in &bc.methods {
            let res = if m == Method::Heuristic {
                heuristic_interval(&solved.theta, &solved.pir.boundary, data.n, bc.level)
            } else {
                let reps = reps.as_ref().expect("resampling methods have replicates");
                assemble_interval(reps, point, bc.level, m, jack.as_ref())
            };
            intervals.push(match res {
                Ok(iv) => IntervalReport::Done(iv),
                Err(e) => IntervalReport::Failed { method: m, level: bc.level, error: e.to_string() },
            });
        }
        if let Some(r) = &reps {
            diagnostics = Some(Diagnostics {
                n_boot: r.lowers.len(),
                infeasible_replicates_lower: r.lowers.iter().filter(|v| !v.is_finite()).count(),
                infeasible_replicates_upper: r.uppers.iter().filter(|v| !v.is_finite()).count(),
            });
            if let Some(path) = &args.replicates {
                emit(Some(path), &replicates_csv(r))?;
            }
        }
    }

    let doc = ResultDoc {
        config: &cfg,
        n: data.n,
        variables: cfg.roles.columns(),
        theta: &solved.theta,
        constraints: &solved.cons,
        region: Region {
            lower: solved.pir.lower,
            upper: solved.pir.upper,
            argmin: solved.pir.argmin.clone(),
            argmax: solved.pir.argmax.clone(),
            missing_slices: solved.pir.boundary.n_missing(),
        },
        intervals,
        diagnostics,
    };
    let text = match cfg.output.format {
        OutputFormat::Json => serde_json::to_string_pretty(&doc)? + "\n",
        OutputFormat::Csv => doc_csv(&doc),
    };
    emit(cfg.output.path.as_deref().map(Path::new), &text)?;
    eprintln!("analysis finished in {:.2} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn fmt_end(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn doc_csv(doc: &ResultDoc) -> String {
    let mut out = String::from("quantity,method,level,lower,upper\n");
    let (lo, hi) = (doc.region.lower.unwrap_or(f64::NAN), doc.region.upper.unwrap_or(f64::NAN));
    let _ = writeln!(out, "region,,,{lo},{hi}");
    for iv in &doc.intervals {
        match iv {
            IntervalReport::Done(iv) => {
                let _ = writeln!(
                    out,
                    "interval,{},{},{},{}",
                    iv.method.name(),
                    iv.level,
                    fmt_end(iv.lower),
                    fmt_end(iv.upper)
                );
            }
            IntervalReport::Failed { method, level, .. } => {
                let _ = writeln!(out, "interval,{},{level},,", method.name());
            }
        }
    }
    out
}

fn replicates_csv(r: &Replicates) -> String {
    let mut out = String::from("replicate,lower,upper\n");
    for (i, (l, u)) in r.lowers.iter().zip(&r.uppers).enumerate() {
        let _ = writeln!(out, "{i},{},{}", fmt_end(*l), fmt_end(*u));
    }
    out
}
