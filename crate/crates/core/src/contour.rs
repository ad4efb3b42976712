//! Contour grids and comparison points for calibrating sensitivity bounds.
//!
//! A b-contour re-solves the program on a grid of two bound strengths; an
//! R-contour evaluates the causal effect directly on a grid of `(a, b)`.
//! Comparison points translate "U is `b` times as strong as `Ẋ_j`" into
//! coordinates on the R-contour axes.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimands::{beta_at, EstimableParams};
use crate::gridopt::{boundary, solve_pir, GridParams};
use crate::r2calc::{f_from_r, CovarianceModel};
use crate::sensmodel::{compile, CompiledConstraints, SensitivityBound, SensitivityModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    Lower,
    Upper,
}

impl std::str::FromStr for End {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(End::Lower),
            "upper" => Ok(End::Upper),
            _ => Err(Error::Config(format!("unknown end `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonKind {
    RigorousUncondD,
    RigorousCondD,
    Informal,
}

impl ComparisonKind {
    pub fn name(self) -> &'static str {
        match self {
            ComparisonKind::RigorousUncondD => "rigorous_uncond_d",
            ComparisonKind::RigorousCondD => "rigorous_cond_d",
            ComparisonKind::Informal => "informal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPoint {
    pub a_coord: f64,
    pub b_coord: f64,
    pub kind: ComparisonKind,
    pub b_d: f64,
    pub b_y: f64,
    pub covariate: String,
    /// Whether the point lies inside the contour's axis ranges.
    pub in_range: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourGrid {
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// `values[i][j]` belongs to `(axis1[i], axis2[j])`; `None` where infeasible.
    pub values: Vec<Vec<Option<f64>>>,
    pub which_end: End,
    pub overlays: Vec<ComparisonPoint>,
}

impl ContourGrid {
    /// Adds comparison points, flagging those outside the axis ranges.
    pub fn add_overlays(&mut self, points: impl IntoIterator<Item = ComparisonPoint>) {
        let span = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        };
        let (l1, h1) = span(&self.axis1);
        let (l2, h2) = span(&self.axis2);
        for mut p in points {
            p.in_range = (l1..=h1).contains(&p.a_coord) && (l2..=h2).contains(&p.b_coord);
            self.overlays.push(p);
        }
    }

    /// `axis1,axis2,value` rows; missing values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis1,axis2,value\n");
        for (i, x) in self.axis1.iter().enumerate() {
            for (j, y) in self.axis2.iter().enumerate() {
                let v = self.values[i][j].map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(out, "{x},{y},{v}");
            }
        }
        out
    }

    /// `kind,a,b,b_d,b_y,covariate` rows for the overlay points.
    pub fn overlays_csv(&self) -> String {
        let mut out = String::from("kind,a,b,b_d,b_y,covariate\n");
        for p in &self.overlays {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.kind.name(),
                p.a_coord,
                p.b_coord,
                p.b_d,
                p.b_y,
                p.covariate
            );
        }
        out
    }
}

/// Replaces the strength of a bound: the factor of a comparative bound, or
/// the half-width of a symmetric direct bound.
pub fn with_strength(bound: &SensitivityBound, v: f64) -> SensitivityBound {
    match bound {
        SensitivityBound::DirectUD { .. } => SensitivityBound::DirectUD { lo: -v, hi: v },
        SensitivityBound::DirectUY { .. } => SensitivityBound::DirectUY { lo: -v, hi: v },
        SensitivityBound::DirectUZ { .. } => SensitivityBound::DirectUZ { lo: -v, hi: v },
        SensitivityBound::DirectZY { .. } => SensitivityBound::DirectZY { lo: -v, hi: v },
        other => other.with_factor(v),
    }
}

/// Chosen region endpoint on a grid of two bound strengths.
///
/// `vary` holds the positions in `template.bounds` of the two bounds whose
/// strengths run along `axis1` and `axis2`.
pub fn b_contour(
    model: &CovarianceModel,
    template: &SensitivityModel,
    vary: (usize, usize),
    axis1: &[f64],
    axis2: &[f64],
    which_end: End,
    grid: &GridParams,
) -> Result<ContourGrid> {
    let nb = template.bounds.len();
    if vary.0 >= nb || vary.1 >= nb || vary.0 == vary.1 {
        return Err(Error::Config("contour axes must name two distinct bounds".into()));
    }
    grid.validate()?;
    let cells: Vec<(usize, usize)> = (0..axis1.len())
        .flat_map(|i| (0..axis2.len()).map(move |j| (i, j)))
        .collect();
    let flat: Vec<Option<f64>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let mut sens = template.clone();
            sens.bounds[vary.0] = with_strength(&template.bounds[vary.0], axis1[i]);
            sens.bounds[vary.1] = with_strength(&template.bounds[vary.1], axis2[j]);
            let (theta, cons) = compile(&sens, model).ok()?;
            let pir = solve_pir(&theta, &cons, grid);
            match which_end {
                End::Lower => pir.lower,
                End::Upper => pir.upper,
            }
        })
        .collect();
    let values = flat.chunks(axis2.len().max(1)).map(<[_]>::to_vec).collect();
    Ok(ContourGrid {
        axis1: axis1.to_vec(),
        axis2: axis2.to_vec(),
        values: if axis2.is_empty() { vec![Vec::new(); axis1.len()] } else { values },
        which_end,
        overlays: Vec::new(),
    })
}

/// Causal effect on a grid of `a` (axis 1) and `b` (axis 2) values.
pub fn r_contour(theta: &EstimableParams, a_axis: &[f64], b_axis: &[f64]) -> ContourGrid {
    let values = a_axis
        .iter()
        .map(|&a| {
            b_axis
                .iter()
                .map(|&b| (a.abs() < 1.0 && b.abs() <= 1.0).then(|| beta_at(theta, a, b)))
                .collect()
        })
        .collect();
    ContourGrid {
        axis1: a_axis.to_vec(),
        axis2: b_axis.to_vec(),
        values,
        which_end: End::Lower,
        overlays: Vec::new(),
    }
}

/// Conditioning set `X̃, Ẋ_{-j}, Z` of a comparison with `Ẋ_j`.
fn w_set(model: &CovarianceModel, j: usize) -> Result<Vec<usize>> {
    if !model.roles.xdot.contains(&j) {
        return Err(Error::RoleMismatch(format!(
            "`{}` is not a benchmark covariate",
            model.cov.names()[j]
        )));
    }
    let mut w = model.roles.xtilde.clone();
    w.extend(model.roles.xdot.iter().copied().filter(|&k| k != j));
    w.extend(model.roles.z);
    Ok(w)
}

fn check_factor(b: f64) -> Result<()> {
    if b.is_finite() && b >= 0.0 {
        Ok(())
    } else {
        Err(Error::PreconditionViolated(format!("comparison factor must be nonnegative, got {b}")))
    }
}

/// `R_{D∼U|X,Z}` when U explains `b_d` times the variance of D that `Ẋ_j` explains.
pub fn comparison_point_d(model: &CovarianceModel, j: usize, b_d: f64) -> Result<f64> {
    check_factor(b_d)?;
    let w = w_set(model, j)?;
    let r_d = model.cov.partial_r(model.roles.d, j, &w)?;
    Ok(b_d.sqrt() * f_from_r(r_d))
}

/// `R_{Y∼U|X,Z,D}` of a comparison with `Ẋ_j`, either unconditional on D or
/// conditional on D.
pub fn comparison_point_y(
    model: &CovarianceModel,
    j: usize,
    b_d: f64,
    b_y: f64,
    conditional_on_d: bool,
) -> Result<f64> {
    check_factor(b_d)?;
    check_factor(b_y)?;
    let (y, d) = (model.roles.y, model.roles.d);
    let w = w_set(model, j)?;
    let mut wd = w.clone();
    wd.push(d);
    let cov = &model.cov;
    let r_d = cov.partial_r(d, j, &w)?;
    let r2_d = r_d * r_d;
    if 1.0 - (1.0 + b_d) * r2_d <= 0.0 {
        return Err(Error::DegenerateDenominator("comparison point: 1 − (1+b)·R²_D ≤ 0"));
    }
    let f2_d = r2_d / (1.0 - r2_d);
    let r2_ydj = cov.partial_r2(y, &[d, j], &w)?;
    let f_y_d = f_from_r(cov.partial_r(y, j, &wd)?);
    let denom = (1.0 - r2_ydj).sqrt() * (1.0 - b_d * f2_d).sqrt();
    let second = b_d.sqrt() * ((1.0 - r2_ydj) / (1.0 - r2_d)).sqrt() * f_y_d;
    let first = if conditional_on_d {
        let r_y_d = cov.partial_r(y, j, &wd)?;
        let r_ydw = cov.partial_r(y, d, &w)?;
        (b_y.sqrt() * (1.0 - b_d * r2_d).sqrt() - b_d.sqrt() * (1.0 - r2_d).sqrt())
            * r_y_d
            * (1.0 - r_ydw * r_ydw).sqrt()
    } else {
        (b_y.sqrt() - b_d.sqrt()) * cov.partial_r(y, j, &w)?
    };
    Ok((first + second) / denom)
}

/// Rigorous comparison point for covariate `j`.
pub fn rigorous_point(
    model: &CovarianceModel,
    j: usize,
    b_d: f64,
    b_y: f64,
    conditional_on_d: bool,
) -> Result<ComparisonPoint> {
    Ok(ComparisonPoint {
        a_coord: comparison_point_d(model, j, b_d)?,
        b_coord: comparison_point_y(model, j, b_d, b_y, conditional_on_d)?,
        kind: if conditional_on_d { ComparisonKind::RigorousCondD } else { ComparisonKind::RigorousUncondD },
        b_d,
        b_y,
        covariate: model.cov.names()[j].clone(),
        in_range: true,
    })
}

/// `(√b·R_{D∼X_j|X_{-j},Z}, √b·R_{Y∼X_j|X_{-j},Z,D})` for any covariate `X_j`.
pub fn informal_comparison_point(model: &CovarianceModel, j: usize, b: f64) -> Result<ComparisonPoint> {
    check_factor(b)?;
    let x = model.roles.x();
    if !x.contains(&j) {
        return Err(Error::RoleMismatch(format!("`{}` is not a covariate", model.cov.names()[j])));
    }
    let mut rest: Vec<usize> = x.into_iter().filter(|&k| k != j).collect();
    rest.extend(model.roles.z);
    let a = b.sqrt() * model.cov.partial_r(model.roles.d, j, &rest)?;
    rest.push(model.roles.d);
    let bb = b.sqrt() * model.cov.partial_r(model.roles.y, j, &rest)?;
    Ok(ComparisonPoint {
        a_coord: a,
        b_coord: bb,
        kind: ComparisonKind::Informal,
        b_d: b,
        b_y: b,
        covariate: model.cov.names()[j].clone(),
        in_range: true,
    })
}

/// Outline of the feasible `(a, b)` set: lower boundary left to right, then
/// upper boundary right to left. Missing slices are skipped.
pub fn feasible_region_slice(
    theta: &EstimableParams,
    cons: &CompiledConstraints,
    grid: &GridParams,
) -> Vec<(f64, f64)> {
    let bv = boundary(theta, cons, grid);
    let mut out: Vec<(f64, f64)> = bv
        .a
        .iter()
        .zip(&bv.lower)
        .filter_map(|(&a, l)| l.map(|l| (a, l)))
        .collect();
    let upper: Vec<(f64, f64)> = bv
        .a
        .iter()
        .zip(&bv.upper)
        .rev()
        .filter_map(|(&a, u)| u.map(|u| (a, u)))
        .collect();
    for p in upper {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    if out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}
