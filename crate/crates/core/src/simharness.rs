//! Simulation scenarios and coverage studies.
//!
//! Two data-generating processes with standard normal errors:
//!
//! * regression: `U, X` independent, `D = X + U + ε_D`, `Y = D + 2X + U + ε_Y`;
//! * instrument: `U, Z` independent, `D = Z + U + ε_D`, `Y = D + U + ε_Y`.
//!
//! In both the causal effect is 1. Experiment `e` draws its data from a ChaCha
//! stream derived from `(seed, e)` and bootstraps with a seed derived the same
//! way, so results do not depend on scheduling.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bootstrap::{
    assemble_interval, bootstrap_distribution, heuristic_interval, jackknife, BootstrapSpec, Method,
    SensitivityInterval,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gridopt::GridParams;
use crate::pipeline::Analysis;
use crate::r2calc::{iv_sim_covariance, regression_sim_covariance, Covariance, Roles};
use crate::sensmodel::{SensitivityBound, SensitivityModel};

const DATA_DOMAIN: u64 = 0x5eed_da7a_0000_0001;
const BOOT_DOMAIN: u64 = 0x5eed_b007_0000_0002;

/// The true causal effect in both scenarios.
pub const TRUE_BETA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Regression,
    Iv,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Regression => "regression",
            ScenarioKind::Iv => "iv",
        }
    }

    /// Generates `n` rows over `(U, X, D, Y)` or `(U, Z, D, Y)`.
    pub fn generate<R: Rng>(self, rng: &mut R, n: usize) -> Dataset {
        let mut cols: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(n)).collect();
        for _ in 0..n {
            let e: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            let (u, w) = (e[0], e[1]);
            let d = w + u + e[2];
            let y = match self {
                ScenarioKind::Regression => d + 2.0 * w + u + e[3],
                ScenarioKind::Iv => d + u + e[3],
            };
            for (c, v) in cols.iter_mut().zip([u, w, d, y]) {
                c.push(v);
            }
        }
        let second = match self {
            ScenarioKind::Regression => "X",
            ScenarioKind::Iv => "Z",
        };
        Dataset::new(["U", second, "D", "Y"].map(String::from).to_vec(), cols)
            .expect("columns have equal length")
    }

    /// Observed columns, in the order expected by [`ScenarioKind::analysis`].
    pub fn observed(self) -> [&'static str; 3] {
        match self {
            ScenarioKind::Regression => ["X", "D", "Y"],
            ScenarioKind::Iv => ["Z", "D", "Y"],
        }
    }

    pub fn population_covariance(self) -> Covariance {
        match self {
            ScenarioKind::Regression => regression_sim_covariance(),
            ScenarioKind::Iv => iv_sim_covariance(),
        }
    }

    /// The sensitivity model fitted in each experiment.
    pub fn analysis(self, grid: GridParams) -> Analysis {
        match self {
            ScenarioKind::Regression => Analysis::new(
                Roles { y: 2, d: 1, z: None, xdot: vec![0], xtilde: vec![] },
                SensitivityModel::new(vec![
                    SensitivityBound::CompUD { given: vec![], compare: vec![0], b: 1.0 },
                    SensitivityBound::CompUYUncondD { given: vec![], compare: vec![0], b: 4.0 / 9.0 },
                ]),
                grid,
            ),
            ScenarioKind::Iv => Analysis::new(
                Roles { y: 2, d: 1, z: Some(0), xdot: vec![], xtilde: vec![] },
                SensitivityModel::new(vec![
                    SensitivityBound::DirectUZ { lo: -0.002, hi: 0.002 },
                    SensitivityBound::DirectZY { lo: -0.002, hi: 0.002 },
                ]),
                grid,
            ),
        }
    }

    /// Region of the fitted model at the population covariance.
    pub fn population_pir(self, grid: GridParams) -> Result<(f64, f64)> {
        let pop = self.population_covariance();
        let idx: Vec<usize> = self
            .observed()
            .iter()
            .map(|n| pop.index(n).expect("observed column exists"))
            .collect();
        self.analysis(grid).solve(pop.subset(&idx))?.endpoints()
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(ScenarioKind::Regression),
            "iv" => Ok(ScenarioKind::Iv),
            _ => Err(Error::Config(format!("unknown scenario `{s}`"))),
        }
    }
}

/// Regression-scenario rows over `(U, X, D, Y)`.
pub fn gen_regression(n: usize, seed: u64) -> Dataset {
    ScenarioKind::Regression.generate(&mut ChaCha12Rng::seed_from_u64(seed), n)
}

/// Instrument-scenario rows over `(U, Z, D, Y)`.
pub fn gen_iv(n: usize, seed: u64) -> Dataset {
    ScenarioKind::Iv.generate(&mut ChaCha12Rng::seed_from_u64(seed), n)
}

fn substream(seed: u64, domain: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ domain);
    rng.set_stream(index);
    rng
}

/// Random positive definite matrix `GᵀG/p + εI` with standard normal `G`.
pub fn random_pd_matrix<R: Rng>(rng: &mut R, p: usize, eps: f64) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(p, p, |_, _| rng.sample(StandardNormal));
    let mut s = g.transpose() * g / p as f64;
    for i in 0..p {
        s[(i, i)] += eps;
    }
    s
}

/// Normal-theory interval for the coefficient of `d` when regressing `y` on
/// `d` and `rest`, using the degrees-of-freedom corrected residual variance.
pub fn ols_interval(cov: &Covariance, n: usize, y: usize, d: usize, rest: &[usize], level: f64) -> Result<SensitivityInterval> {
    let k = rest.len() + 1;
    if n <= k + 1 {
        return Err(Error::PreconditionViolated("too few rows for the oracle regression".into()));
    }
    let beta = cov.beta(y, d, rest)?;
    let mut regs = rest.to_vec();
    regs.push(d);
    let rss = n as f64 * cov.residual_variance(&[y], &regs)?[(0, 0)];
    let s2 = rss / (n - k - 1) as f64;
    let vd = cov.residual_variance(&[d], rest)?[(0, 0)];
    let se = (s2 / (n as f64 * vd)).sqrt();
    let q = Normal::standard().inverse_cdf(1.0 - (1.0 - level) / 2.0);
    Ok(SensitivityInterval {
        lower: beta - q * se,
        upper: beta + q * se,
        method: Method::Oracle,
        level,
        n_infeasible_lower: 0,
        n_infeasible_upper: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub kind: ScenarioKind,
    pub n: usize,
    pub reps: usize,
    /// `seed` is the master seed of the study; `method` is ignored.
    pub boot: BootstrapSpec,
    pub grid: GridParams,
    pub methods: Vec<Method>,
}

impl SimScenario {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 || self.reps == 0 {
            return Err(Error::Config("n must be at least 10 and reps positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        self.boot.validate()?;
        self.grid.validate()
    }
}

/// Per-method summary of a coverage study.
///
/// `mean_length`/`median_length` follow the scenario's length convention: in
/// the regression scenario the distance from the interval's lower end to the
/// true effect over experiments that cover it, in the instrument scenario the
/// full width. `mean_width`/`median_width` are always full widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub method: Method,
    pub coverage_beta: f64,
    pub coverage_pir: Option<f64>,
    pub mean_length: f64,
    pub median_length: f64,
    pub mean_width: f64,
    pub median_width: f64,
    pub completed: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub scenario: SimScenario,
    /// Region at the population covariance, computed by the same pipeline.
    pub pir: (f64, f64),
    pub rows: Vec<CoverageRow>,
}

/// Intervals from one experiment, in the order of `scenario.methods`.
pub fn run_experiment(scenario: &SimScenario, index: u64, analysis: &Analysis) -> Vec<Option<SensitivityInterval>> {
    let kind = scenario.kind;
    let full = kind.generate(&mut substream(scenario.boot.seed, DATA_DOMAIN, index), scenario.n);
    let observed = full.select(&kind.observed()).expect("observed columns exist");
    let point = observed.covariance().and_then(|c| analysis.solve(c));
    let needs_boot = scenario.methods.iter().any(|m| m.is_bootstrap());
    let boot_seed = substream(scenario.boot.seed, BOOT_DOMAIN, index).next_u64();
    let spec = BootstrapSpec { seed: boot_seed, ..scenario.boot };
    let reps = match (&point, needs_boot) {
        (Ok(_), true) => bootstrap_distribution(&observed, analysis, &spec).ok(),
        _ => None,
    };
    let jack = if scenario.methods.contains(&Method::Bca) && reps.is_some() {
        jackknife(&observed, analysis).ok()
    } else {
        None
    };
    scenario
        .methods
        .iter()
        .map(|&m| match m {
            Method::Oracle => {
                let cov = full.covariance().ok()?;
                // columns of `full`: U, X or Z, D, Y; the instrument is not a regressor
                let rest: &[usize] = match kind {
                    ScenarioKind::Regression => &[1, 0],
                    ScenarioKind::Iv => &[0],
                };
                ols_interval(&cov, scenario.n, 3, 2, rest, scenario.boot.level).ok()
            }
            Method::Heuristic => {
                let s = point.as_ref().ok()?;
                heuristic_interval(&s.theta, &s.pir.boundary, scenario.n, scenario.boot.level).ok()
            }
            _ => {
                let s = point.as_ref().ok()?;
                let endpoints = s.endpoints().ok()?;
                assemble_interval(reps.as_ref()?, endpoints, scenario.boot.level, m, jack.as_ref()).ok()
            }
        })
        .collect()
}

fn mean_median(mut v: Vec<f64>) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let k = v.len();
    let median = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
    (mean, median)
}

/// Runs `scenario.reps` independent experiments in parallel.
pub fn run_coverage(scenario: &SimScenario) -> Result<CoverageReport> {
    scenario.validate()?;
    let analysis = scenario.kind.analysis(scenario.grid);
    let pir = scenario.kind.population_pir(scenario.grid)?;
    let results: Vec<Vec<Option<SensitivityInterval>>> = (0..scenario.reps as u64)
        .into_par_iter()
        .map(|e| run_experiment(scenario, e, &analysis))
        .collect();
    let rows = scenario
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let ivs: Vec<SensitivityInterval> = results.iter().filter_map(|r| r[k]).collect();
            let completed = ivs.len();
            let frac = |c: usize| if completed == 0 { f64::NAN } else { c as f64 / completed as f64 };
            let cov_beta = ivs.iter().filter(|iv| iv.contains(TRUE_BETA)).count();
            let cov_pir = ivs.iter().filter(|iv| iv.contains_interval(pir.0, pir.1)).count();
            let lengths: Vec<f64> = match scenario.kind {
                ScenarioKind::Regression => ivs
                    .iter()
                    .filter(|iv| iv.contains(TRUE_BETA))
                    .map(|iv| TRUE_BETA - iv.lower)
                    .collect(),
                ScenarioKind::Iv => ivs.iter().map(|iv| iv.width()).collect(),
            };
            let (mean_length, median_length) = mean_median(lengths);
            let (mean_width, median_width) = mean_median(ivs.iter().map(|iv| iv.width()).collect());
            CoverageRow {
                method,
                coverage_beta: frac(cov_beta),
                coverage_pir: (method != Method::Oracle).then(|| frac(cov_pir)),
                mean_length,
                median_length,
                mean_width,
                median_width,
                completed,
                failures: scenario.reps - completed,
            }
        })
        .collect();
    Ok(CoverageReport { scenario: scenario.clone(), pir, rows })
}

impl CoverageReport {
    pub fn to_csv(&self) -> String {
        let s = &self.scenario;
        let mut out = String::from(
            "scenario,n,reps,n_boot,level,seed,method,coverage_beta,coverage_pir,mean_length,median_length,mean_width,median_width,completed,failures\n",
        );
        for r in &self.rows {
            let pir = r.coverage_pir.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.kind.name(),
                s.n,
                s.reps,
                s.boot.n_boot,
                s.boot.level,
                s.boot.seed,
                r.method.name(),
                r.coverage_beta,
                pir,
                r.mean_length,
                r.median_length,
                r.mean_width,
                r.median_width,
                r.completed,
                r.failures
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let s = &self.scenario;
        let mut out = format!(
            "scenario {} n={} reps={} n_boot={} level={} seed={}  population region [{:.4}, {:.4}]\n",
            s.kind.name(),
            s.n,
            s.reps,
            s.boot.n_boot,
            s.boot.level,
            s.boot.seed,
            self.pir.0,
            self.pir.1
        );
        let _ = writeln!(
            out,
            "{:<12} {:>9} {:>9} {:>10} {:>10} {:>9}",
            "method", "cov beta", "cov PIR", "mean len", "median len", "failures"
        );
        for r in &self.rows {
            let pir = r.coverage_pir.map_or("-".to_string(), |v| format!("{:.1}%", 100.0 * v));
            let _ = writeln!(
                out,
                "{:<12} {:>8.1}% {:>9} {:>10.3} {:>10.3} {:>9}",
                r.method.name(),
                100.0 * r.coverage_beta,
                pir,
                r.mean_length,
                r.median_length,
                r.failures
            );
        }
        out
    }
}
