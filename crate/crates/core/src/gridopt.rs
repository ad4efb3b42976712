//! Boundary grid search for the plug-in partially identified region.
//!
//! For a fixed `a` the objective is linear in `b`, so its extrema over the
//! feasible set sit on the per-slice minimum `L_i` and maximum `U_i` of `b`.
//! Bounds on auxiliaries are pushed onto `b` through the monotone transfer
//! functions of [`crate::sensmodel`]. When instrument bounds are present the
//! slice boundary is found by scanning a `b` grid and, for each candidate, a
//! `g` grid.
//!
//! Everything here is deterministic. Instrument slices may be evaluated in
//! parallel; results are collected in slice order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimands::{beta_at, EstimableParams, SensitivityPoint};
use crate::r2calc::{f_from_r, r_from_f};
use crate::sensmodel::{h_b, h_d, h_fg, h_fo, h_fq, CompiledConstraints, Interval};

/// Tolerance on `o`-interval membership.
pub const O_TOL: f64 = 1e-8;

/// Grid sizes for `a`, `b` and `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub n_a: usize,
    pub n_b: usize,
    pub n_g: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        Self::uniform(200)
    }
}

impl GridParams {
    pub fn uniform(n: usize) -> Self {
        Self { n_a: n, n_b: n, n_g: n }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.n_a < 2 || self.n_b < 2 || self.n_g < 2 {
            return Err(crate::Error::Config("grid sizes must be at least 2".into()));
        }
        Ok(())
    }
}

/// The discretized boundary `{(A_i, L_i)} ∪ {(A_i, U_i)}`.
///
/// `None` marks a missing slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryVectors {
    pub a: Vec<f64>,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    /// `g` values witnessing feasibility of `(A_i, L_i)` on the instrument path.
    #[serde(skip)]
    pub g_lower: Vec<Option<f64>>,
    #[serde(skip)]
    pub g_upper: Vec<Option<f64>>,
}

impl BoundaryVectors {
    pub fn n_missing(&self) -> usize {
        self.lower.iter().filter(|v| v.is_none()).count()
    }

    pub fn all_missing(&self) -> bool {
        self.lower.iter().all(Option::is_none)
    }
}

/// Estimated partially identified region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PirEstimate {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub argmin: Option<SensitivityPoint>,
    pub argmax: Option<SensitivityPoint>,
    pub boundary: BoundaryVectors,
    pub feasible: bool,
}

/// Equally spaced grid on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + i as f64 * step })
        .collect()
}

/// Feasible `b`-range at slice `a` from all bounds except the instrument links.
pub fn b_range(theta: &EstimableParams, cons: &CompiledConstraints, a: f64) -> Option<Interval> {
    let mut b = cons.b.intersect(Interval::UNIT);
    if cons.links_d() {
        let mut d = cons.d.unwrap_or(Interval::UNIT);
        for eb in &cons.e {
            d = d.intersect(Interval::new(
                h_d(a, eb.interval.lo, eb.c2, eb.c3, eb.c4),
                h_d(a, eb.interval.hi, eb.c2, eb.c3, eb.c4),
            ));
        }
        if d.is_empty() {
            return None;
        }
        b = b.intersect(Interval::new(h_b(a, d.lo, theta.c1), h_b(a, d.hi, theta.c1)));
    }
    if b.is_empty() {
        None
    } else {
        Some(b)
    }
}

/// Instrument-path feasibility test for a fixed slice `a`.
struct IvSlice<'a> {
    cons: &'a CompiledConstraints,
    a: f64,
    f_c6: f64,
    g: Vec<f64>,
    sg: Vec<f64>,
}

impl<'a> IvSlice<'a> {
    fn new(cons: &'a CompiledConstraints, a: f64, n_g: usize) -> Self {
        let c5 = cons.c5.unwrap_or(0.0);
        let f_c6 = f_from_r(cons.c6.unwrap_or(0.0));
        let gl = r_from_f(h_fg(a, f_from_r(cons.m.lo), c5));
        let gu = r_from_f(h_fg(a, f_from_r(cons.m.hi), c5));
        let g = linspace(gl, gu, n_g);
        let sg = g.iter().map(|g| (1.0 - g * g).max(0.0).sqrt()).collect();
        Self { cons, a, f_c6, g, sg }
    }

    /// Returns a witnessing `g` if some grid point makes `b` feasible.
    fn witness(&self, b: f64) -> Option<f64> {
        let o = self.cons.o_interval_at(self.a, b);
        if o.is_empty() {
            return None;
        }
        let sb = (1.0 - b * b).max(0.0).sqrt();
        let num = |g: f64, sg: f64| self.f_c6 * sg - b * g;
        let (lo, hi) = if sb == 0.0 {
            // o = sign(num); only o-intervals reaching ±1 can hold.
            let lo = if o.lo - O_TOL <= -1.0 { f64::NEG_INFINITY } else { f64::MIN_POSITIVE };
            let hi = if o.hi + O_TOL >= 1.0 { f64::INFINITY } else { -f64::MIN_POSITIVE };
            (lo, hi)
        } else {
            (
                sb * f_from_r((o.lo - O_TOL).max(-1.0)),
                sb * f_from_r((o.hi + O_TOL).min(1.0)),
            )
        };
        if lo > hi {
            return None;
        }
        let (gl, gu) = (self.g[0], self.g[self.g.len() - 1]);
        let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut probe = |g: f64| {
            let v = num(g, (1.0 - g * g).max(0.0).sqrt());
            mn = mn.min(v);
            mx = mx.max(v);
        };
        probe(gl);
        probe(gu);
        if self.f_c6 != 0.0 {
            let gs = r_from_f(-b / self.f_c6);
            if gs > gl && gs < gu {
                probe(gs);
            }
        }
        // Exact range of num over [gl, gu] up to rounding; widen slightly.
        let slack = 1e-12 * (1.0 + mn.abs().max(mx.abs()));
        if mx + slack < lo || mn - slack > hi {
            return None;
        }
        self.g
            .iter()
            .zip(&self.sg)
            .find(|(&g, &sg)| {
                let v = num(g, sg);
                v >= lo && v <= hi && (sb > 0.0 || v != 0.0)
            })
            .map(|(&g, _)| g)
    }
}

struct SliceResult {
    lower: Option<f64>,
    upper: Option<f64>,
    g_lower: Option<f64>,
    g_upper: Option<f64>,
}

fn solve_slice(
    theta: &EstimableParams,
    cons: &CompiledConstraints,
    grid: &GridParams,
    a: f64,
) -> SliceResult {
    let none = SliceResult { lower: None, upper: None, g_lower: None, g_upper: None };
    let Some(b) = b_range(theta, cons, a) else {
        return none;
    };
    if !cons.iv_active {
        return SliceResult { lower: Some(b.lo), upper: Some(b.hi), g_lower: None, g_upper: None };
    }
    let iv = IvSlice::new(cons, a, grid.n_g);
    let bs = linspace(b.lo, b.hi, grid.n_b);
    let mut lower = None;
    for &bj in &bs {
        if let Some(g) = iv.witness(bj) {
            lower = Some((bj, g));
            break;
        }
    }
    let Some((lb, lg)) = lower else {
        return none;
    };
    let mut upper = (lb, lg);
    for &bj in bs.iter().rev() {
        if bj < lb {
            break;
        }
        if let Some(g) = iv.witness(bj) {
            upper = (bj, g);
            break;
        }
    }
    SliceResult {
        lower: Some(lb),
        upper: Some(upper.0),
        g_lower: Some(lg),
        g_upper: Some(upper.1),
    }
}

/// Computes the boundary vectors `A`, `L`, `U`.
pub fn boundary(theta: &EstimableParams, cons: &CompiledConstraints, grid: &GridParams) -> BoundaryVectors {
    let a = linspace(cons.a.lo, cons.a.hi, grid.n_a.max(1));
    let results: Vec<SliceResult> = if cons.iv_active {
        a.par_iter().map(|&ai| solve_slice(theta, cons, grid, ai)).collect()
    } else {
        a.iter().map(|&ai| solve_slice(theta, cons, grid, ai)).collect()
    };
    let mut out = BoundaryVectors {
        a,
        lower: Vec::with_capacity(results.len()),
        upper: Vec::with_capacity(results.len()),
        g_lower: Vec::with_capacity(results.len()),
        g_upper: Vec::with_capacity(results.len()),
    };
    for r in results {
        out.lower.push(r.lower);
        out.upper.push(r.upper);
        out.g_lower.push(r.g_lower);
        out.g_upper.push(r.g_upper);
    }
    out
}

/// Reconstructs the auxiliary parameters at a boundary point.
///
/// `d` and `e` are obtained by inverting their links; `m` and `o` from the
/// witnessing `g` on the instrument path.
pub fn complete_point(
    theta: &EstimableParams,
    cons: &CompiledConstraints,
    a: f64,
    b: f64,
    g: Option<f64>,
) -> SensitivityPoint {
    let mut psi = SensitivityPoint::ab(a, b);
    if cons.links_d() {
        let sa = (1.0 - a * a).sqrt();
        let d = b * (1.0 - theta.c1 * theta.c1).sqrt() * sa + theta.c1 * a;
        psi.d = Some(d);
        psi.e = cons
            .e
            .iter()
            .map(|eb| {
                let s3 = 1.0 - eb.c3 * eb.c3;
                (d * (1.0 - eb.c4 * eb.c4).sqrt() - eb.c2 * a * s3.sqrt())
                    / ((1.0 - eb.c2 * eb.c2).sqrt() * (1.0 - a * a * s3).sqrt())
            })
            .collect();
    }
    if let (true, Some(g), Some(c5), Some(c6)) = (cons.iv_active, g, cons.c5, cons.c6) {
        psi.g = Some(g);
        let f_m = (f_from_r(g) * (1.0 - a * a).sqrt() + c5 * a) / (1.0 - c5 * c5).sqrt();
        psi.m = Some(r_from_f(f_m));
        psi.o = Some(r_from_f(h_fo(b, g, f_from_r(c6))));
        psi.q = cons.zy.iter().map(|z| r_from_f(h_fq(a, b, z.c7, z.c8))).collect();
    }
    psi
}

/// Evaluates the objective over the boundary and returns the extrema.
pub fn solve_pir(theta: &EstimableParams, cons: &CompiledConstraints, grid: &GridParams) -> PirEstimate {
    let boundary = boundary(theta, cons, grid);
    pir_from_boundary(theta, cons, boundary)
}

/// Objective extrema over a precomputed boundary.
pub fn pir_from_boundary(
    theta: &EstimableParams,
    cons: &CompiledConstraints,
    boundary: BoundaryVectors,
) -> PirEstimate {
    let mut lo: Option<(f64, usize, bool)> = None;
    let mut hi: Option<(f64, usize, bool)> = None;
    for i in 0..boundary.a.len() {
        let (Some(l), Some(u)) = (boundary.lower[i], boundary.upper[i]) else {
            continue;
        };
        let a = boundary.a[i];
        for (b, is_upper) in [(l, false), (u, true)] {
            let v = beta_at(theta, a, b);
            if lo.is_none_or(|(m, _, _)| v < m) {
                lo = Some((v, i, is_upper));
            }
            if hi.is_none_or(|(m, _, _)| v > m) {
                hi = Some((v, i, is_upper));
            }
        }
    }
    let point = |(_, i, up): (f64, usize, bool)| {
        let (b, g) = if up {
            (boundary.upper[i].unwrap_or(0.0), boundary.g_upper[i])
        } else {
            (boundary.lower[i].unwrap_or(0.0), boundary.g_lower[i])
        };
        complete_point(theta, cons, boundary.a[i], b, g)
    };
    PirEstimate {
        lower: lo.map(|x| x.0),
        upper: hi.map(|x| x.0),
        argmin: lo.map(point),
        argmax: hi.map(point),
        feasible: lo.is_some(),
        boundary,
    }
}
