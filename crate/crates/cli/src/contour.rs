//! `sensopt contour`: b-contour and R-contour grids with comparison points.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use sensopt::contour::{b_contour, feasible_region_slice, informal_comparison_point, r_contour, rigorous_point, End};
use sensopt::gridopt::linspace;
use sensopt::pipeline::Analysis;
use sensopt::r2calc::CovarianceModel;
use sensopt::Error;

use crate::load::{load_config, load_data};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ContourType {
    /// Region endpoint over the strengths of two bounds
    B,
    /// Causal effect over `(R_{D~U|X,Z}, R_{Y~U|X,Z,D})`
    R,
}

#[derive(Debug, clap::Args)]
pub struct ContourArgs {
    /// TOML config, or a JSON result document
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "type", value_name = "TYPE", value_enum)]
    kind: ContourType,
    /// Region endpoint drawn by a b-contour
    #[arg(long, default_value = "upper", value_parser = parse_end)]
    end: End,
    /// Points per axis
    #[arg(long, default_value_t = 41)]
    res: usize,
    /// Positions in `[[bounds]]` of the two bounds varied by a b-contour
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1])]
    vary: Vec<usize>,
    /// Range of the first axis as `lo:hi`
    #[arg(long, value_parser = parse_range)]
    range1: Option<(f64, f64)>,
    /// Range of the second axis as `lo:hi`
    #[arg(long, value_parser = parse_range)]
    range2: Option<(f64, f64)>,
    /// Comparison points for an R-contour as `covariate:b`, comma separated
    #[arg(long, value_delimiter = ',', value_parser = parse_benchmark)]
    benchmarks: Vec<(String, f64)>,
    /// Directory for the output files
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn parse_end(s: &str) -> Result<End, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected `lo:hi`")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number `{hi}`"))?;
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn parse_benchmark(s: &str) -> Result<(String, f64), String> {
    let (name, b) = s.rsplit_once(':').ok_or("expected `covariate:b`")?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad factor `{b}`"))?;
    Ok((name.trim().to_string(), b))
}

pub fn run(args: &ContourArgs) -> Result<()> {
    if args.res < 2 {
        bail!("--res must be at least 2");
    }
    let cfg = load_config(&args.config)?;
    let data = load_data(&cfg)?;
    let analysis = Analysis::new(cfg.roles.roles()?, cfg.sensitivity_model()?, cfg.grid);
    let model = CovarianceModel::new(data.cov, analysis.roles.clone())?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;

    let (stem, grid) = match args.kind {
        ContourType::B => {
            if !args.benchmarks.is_empty() {
                bail!("--benchmarks applies to R-contours only");
            }
            let &[i, j] = args.vary.as_slice() else { bail!("--vary takes two bound positions") };
            let default = |k: usize| -> Result<(f64, f64)> {
                let b = analysis
                    .sens
                    .bounds
                    .get(k)
                    .ok_or_else(|| anyhow::anyhow!("there is no bound at position {k}"))?;
                Ok(if b.factor().is_some() { (0.0, 3.0) } else { (0.0, 0.9) })
            };
            let (r1, r2) = (args.range1.map_or_else(|| default(i), Ok)?, args.range2.map_or_else(|| default(j), Ok)?);
            let ax1 = linspace(r1.0, r1.1, args.res);
            let ax2 = linspace(r2.0, r2.1, args.res);
            let g = b_contour(&model, &analysis.sens, (i, j), &ax1, &ax2, args.end, &analysis.grid)?;
            let end = match args.end {
                End::Lower => "lower",
                End::Upper => "upper",
            };
            (format!("b_contour_{end}"), g)
        }
        ContourType::R => {
            let r1 = args.range1.unwrap_or((-0.9, 0.9));
            let r2 = args.range2.unwrap_or((-0.9, 0.9));
            let solved = analysis.solve(model.cov.clone())?;
            let mut g = r_contour(&solved.theta, &linspace(r1.0, r1.1, args.res), &linspace(r2.0, r2.1, args.res));
            let mut points = Vec::new();
            for (name, b) in &args.benchmarks {
                let j = model
                    .cov
                    .index(name)
                    .ok_or_else(|| Error::RoleMismatch(format!("`{name}` is not an analysis variable")))?;
                if model.roles.xdot.contains(&j) {
                    for cond in [false, true] {
                        match rigorous_point(&model, j, *b, *b, cond) {
                            Ok(p) => points.push(p),
                            Err(e) => eprintln!("skipping comparison point {name}:{b}: {e}"),
                        }
                    }
                }
                points.push(informal_comparison_point(&model, j, *b)?);
            }
            g.add_overlays(points);
            let outline = feasible_region_slice(&solved.theta, &solved.cons, &analysis.grid);
            let mut text = String::from("a,b\n");
            for (a, b) in outline {
                text.push_str(&format!("{a},{b}\n"));
            }
            write(&args.out_dir.join("r_contour_region.csv"), &text)?;
            ("r_contour".to_string(), g)
        }
    };
    write(&args.out_dir.join(format!("{stem}.csv")), &grid.to_csv())?;
    write(&args.out_dir.join(format!("{stem}.json")), &(serde_json::to_string_pretty(&grid)? + "\n"))?;
    if args.kind == ContourType::R {
        write(&args.out_dir.join("r_contour_overlays.csv"), &grid.overlays_csv())?;
    }
    Ok(())
}

fn write(path: &std::path::Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
