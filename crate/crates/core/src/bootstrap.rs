//! Sensitivity intervals from the nonparametric bootstrap, and the heuristic
//! interval that treats the confounder as observed.
//!
//! Replicate `i` draws from its own ChaCha stream derived from `(seed, i)`, so
//! parallel and sequential runs produce the same vectors. A replicate whose
//! plug-in program is infeasible contributes `−∞` to the lower vector and
//! `+∞` to the upper vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimands::EstimableParams;
use crate::gridopt::BoundaryVectors;
use crate::pipeline::Analysis;
use crate::r2calc::f_from_r;

/// Interval construction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Percentile,
    Basic,
    Bca,
    Heuristic,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Percentile => "percentile",
            Method::Basic => "basic",
            Method::Bca => "bca",
            Method::Heuristic => "heuristic",
            Method::Oracle => "oracle",
        }
    }

    pub fn is_bootstrap(self) -> bool {
        matches!(self, Method::Percentile | Method::Basic | Method::Bca)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "percentile" => Ok(Method::Percentile),
            "basic" => Ok(Method::Basic),
            "bca" => Ok(Method::Bca),
            "heuristic" => Ok(Method::Heuristic),
            "oracle" => Ok(Method::Oracle),
            _ => Err(Error::Config(format!("unknown interval method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSpec {
    pub n_boot: usize,
    pub level: f64,
    pub method: Method,
    pub seed: u64,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self { n_boot: 1000, level: 0.95, method: Method::Percentile, seed: 0 }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_boot < 1 {
            return Err(Error::Config("n_boot must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0, 1), got {}", self.level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityInterval {
    pub lower: f64,
    pub upper: f64,
    pub method: Method,
    pub level: f64,
    pub n_infeasible_lower: usize,
    pub n_infeasible_upper: usize,
}

impl SensitivityInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn contains_interval(&self, lo: f64, hi: f64) -> bool {
        self.lower <= lo && hi <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Bootstrap distribution of the region endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicates {
    pub lowers: Vec<f64>,
    pub uppers: Vec<f64>,
}

/// Random stream for replicate `index` under `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Row multiplicities of one resample of `n` rows.
pub fn resample_counts<R: Rng>(rng: &mut R, n: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

/// Re-solves the plug-in program on `spec.n_boot` resamples of `data`.
///
/// The columns of `data` must be ordered as the role indices of `analysis`.
pub fn bootstrap_distribution(data: &Dataset, analysis: &Analysis, spec: &BootstrapSpec) -> Result<Replicates> {
    spec.validate()?;
    let n = data.n_rows();
    if n < 10 {
        return Err(Error::PreconditionViolated(format!("bootstrap needs at least 10 rows, got {n}")));
    }
    analysis.solve(data.covariance()?)?.endpoints()?;
    let pairs: Vec<(f64, f64)> = (0..spec.n_boot)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(spec.seed, i as u64);
            let counts = resample_counts(&mut rng, n);
            analysis.endpoints_or_unbounded(data.weighted_covariance(&counts))
        })
        .collect();
    let (lowers, uppers) = pairs.into_iter().unzip();
    Ok(Replicates { lowers, uppers })
}

/// Leave-one-out endpoints used for the BCa acceleration.
pub fn jackknife(data: &Dataset, analysis: &Analysis) -> Result<Replicates> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::PreconditionViolated("jackknife needs at least 2 rows".into()));
    }
    let pairs: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut counts = vec![1u32; n];
            counts[i] = 0;
            analysis.endpoints_or_unbounded(data.weighted_covariance(&counts))
        })
        .collect();
    let (lowers, uppers) = pairs.into_iter().unzip();
    Ok(Replicates { lowers, uppers })
}

/// Sample quantile by linear interpolation between order statistics
/// (`h = (n−1)p`). `sorted` may contain infinities but no NaN.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 || lo + 1 >= n {
        return sorted[lo];
    }
    let (x0, x1) = (sorted[lo], sorted[lo + 1]);
    if x0 == x1 || x0 == f64::NEG_INFINITY {
        return x0;
    }
    if x1 == f64::INFINITY {
        return x1;
    }
    x0 + frac * (x1 - x0)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// BCa-adjusted probability for one side.
fn bca_level(reps: &[f64], point: f64, jack: &[f64], z_alpha: f64) -> Result<f64> {
    let b = reps.len() as f64;
    let below = reps.iter().filter(|&&r| r < point).count() as f64;
    let equal = reps.iter().filter(|&&r| r == point).count() as f64;
    let frac = ((below + 0.5 * equal) / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    let nd = std_normal();
    let z0 = nd.inverse_cdf(frac);
    let acc = acceleration(jack);
    let zs = z0 + z_alpha;
    let denom = 1.0 - acc * zs;
    if denom <= 0.0 {
        return Ok(if z_alpha < 0.0 { 0.0 } else { 1.0 });
    }
    Ok(nd.cdf(z0 + zs / denom))
}

/// Jackknife skewness estimate; zero when undefined.
fn acceleration(jack: &[f64]) -> f64 {
    if jack.is_empty() || jack.iter().any(|v| !v.is_finite()) {
        return 0.0;
    }
    let m = jack.iter().sum::<f64>() / jack.len() as f64;
    let s2: f64 = jack.iter().map(|v| (m - v).powi(2)).sum();
    let s3: f64 = jack.iter().map(|v| (m - v).powi(3)).sum();
    if s2 <= 0.0 {
        return 0.0;
    }
    let acc = s3 / (6.0 * s2.powf(1.5));
    if acc.is_finite() {
        acc
    } else {
        0.0
    }
}

/// Assembles a sensitivity interval from the replicate vectors.
///
/// `point` is the plug-in `(lower, upper)`; `jack` is required for BCa.
pub fn assemble_interval(
    reps: &Replicates,
    point: (f64, f64),
    level: f64,
    method: Method,
    jack: Option<&Replicates>,
) -> Result<SensitivityInterval> {
    if reps.lowers.is_empty() || reps.lowers.len() != reps.uppers.len() {
        return Err(Error::PreconditionViolated("replicate vectors must be nonempty and equal in length".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("level must lie in (0, 1), got {level}")));
    }
    let alpha = 1.0 - level;
    let lows = sorted(&reps.lowers);
    let ups = sorted(&reps.uppers);
    let n_inf_lo = lows.iter().filter(|v| !v.is_finite()).count();
    let n_inf_hi = ups.iter().filter(|v| !v.is_finite()).count();
    let (lower, upper) = match method {
        Method::Percentile => (quantile_sorted(&lows, alpha / 2.0), quantile_sorted(&ups, 1.0 - alpha / 2.0)),
        Method::Basic => {
            let ql = quantile_sorted(&lows, 1.0 - alpha / 2.0);
            let qu = quantile_sorted(&ups, alpha / 2.0);
            let lower = if ql.is_finite() { 2.0 * point.0 - ql } else { f64::NEG_INFINITY };
            let upper = if qu.is_finite() { 2.0 * point.1 - qu } else { f64::INFINITY };
            (lower, upper)
        }
        Method::Bca => {
            let jack = jack.ok_or_else(|| Error::PreconditionViolated("BCa needs jackknife values".into()))?;
            let side = |s: &[f64], p: f64, j: &[f64], z: f64, name: &str| -> Result<f64> {
                if s.iter().all(|v| !v.is_finite()) {
                    return Err(Error::DegenerateBca(format!("every {name} replicate is infinite")));
                }
                if s.iter().all(|&v| v == s[0]) {
                    return Ok(if s[0] == p { p } else { s[0] });
                }
                Ok(quantile_sorted(s, bca_level(s, p, j, z)?))
            };
            let z = std_normal().inverse_cdf(1.0 - alpha / 2.0);
            (
                side(&lows, point.0, &jack.lowers, -z, "lower")?,
                side(&ups, point.1, &jack.uppers, z, "upper")?,
            )
        }
        Method::Heuristic | Method::Oracle => {
            return Err(Error::PreconditionViolated(format!("`{}` is not a bootstrap method", method.name())))
        }
    };
    Ok(SensitivityInterval {
        lower,
        upper,
        method,
        level,
        n_infeasible_lower: n_inf_lo,
        n_infeasible_upper: n_inf_hi,
    })
}

/// Extremes of the confidence bound that treats U as observed, over the boundary.
pub fn heuristic_interval(
    theta: &EstimableParams,
    boundary: &BoundaryVectors,
    n: usize,
    level: f64,
) -> Result<SensitivityInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("level must lie in (0, 1), got {level}")));
    }
    if n == 0 {
        return Err(Error::PreconditionViolated("sample size must be positive".into()));
    }
    let q = std_normal().inverse_cdf(1.0 - (1.0 - level) / 2.0);
    let s = theta.sigma_ratio;
    let mut lower = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    for i in 0..boundary.a.len() {
        let (Some(l), Some(u)) = (boundary.lower[i], boundary.upper[i]) else {
            continue;
        };
        let a = boundary.a[i];
        let f = f_from_r(a);
        let g = q / ((n as f64).sqrt() * (1.0 - a * a).sqrt());
        let star = f / (f * f + g * g).sqrt();
        let mut cands = vec![l, u];
        for b in [star, -star] {
            if b > l && b < u {
                cands.push(b);
            }
        }
        for b in cands {
            let half = g * (1.0 - b * b).max(0.0).sqrt();
            lower = lower.min(theta.beta_ols - s * (b * f + half));
            upper = upper.max(theta.beta_ols - s * (b * f - half));
        }
    }
    if lower > upper {
        return Err(Error::ModelInfeasibleOnSample);
    }
    Ok(SensitivityInterval {
        lower,
        upper,
        method: Method::Heuristic,
        level,
        n_infeasible_lower: 0,
        n_infeasible_upper: 0,
    })
}
