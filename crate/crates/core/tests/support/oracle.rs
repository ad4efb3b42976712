//! Dense brute-force feasibility scan used as an independent check of the
//! boundary grid search.

use sensopt::estimands::{beta_at, EstimableParams};
use sensopt::gridopt::{linspace, O_TOL};
use sensopt::r2calc::{f_from_r, r_from_f};
use sensopt::sensmodel::{h_fo, h_fq, CompiledConstraints};

#[derive(Debug, Clone, Copy)]
pub struct OracleResult {
    pub lower: f64,
    pub upper: f64,
    pub argmin: (f64, f64),
    pub argmax: (f64, f64),
}

/// Whether `(a, b)` admits some `g` on a grid of `n_g` values in `(−1, 1)`.
fn feasible(theta: &EstimableParams, cons: &CompiledConstraints, a: f64, b: f64, gs: &[f64]) -> bool {
    if b < cons.b.lo || b > cons.b.hi {
        return false;
    }
    let sa = (1.0 - a * a).sqrt();
    if cons.links_d() {
        // invert b = h_b(a, d) and d = h_d(a, e)
        let d = b * (1.0 - theta.c1 * theta.c1).sqrt() * sa + theta.c1 * a;
        if let Some(iv) = cons.d {
            if d < iv.lo || d > iv.hi {
                return false;
            }
        }
        for eb in &cons.e {
            let s3 = 1.0 - eb.c3 * eb.c3;
            let e = (d * (1.0 - eb.c4 * eb.c4).sqrt() - eb.c2 * a * s3.sqrt())
                / ((1.0 - eb.c2 * eb.c2).sqrt() * (1.0 - a * a * s3).sqrt());
            if e < eb.interval.lo || e > eb.interval.hi {
                return false;
            }
        }
    }
    if !cons.iv_active {
        return true;
    }
    let (c5, c6) = (cons.c5.unwrap(), cons.c6.unwrap());
    let qs: Vec<f64> = cons.zy.iter().map(|z| r_from_f(h_fq(a, b, z.c7, z.c8))).collect();
    gs.iter().any(|&g| {
        let f_m = (f_from_r(g) * sa + c5 * a) / (1.0 - c5 * c5).sqrt();
        let m = r_from_f(f_m);
        if m < cons.m.lo || m > cons.m.hi {
            return false;
        }
        let o = r_from_f(h_fo(b, g, f_from_r(c6)));
        if o < cons.o.lo - O_TOL || o > cons.o.hi + O_TOL {
            return false;
        }
        cons.zy.iter().zip(&qs).all(|(z, q)| o.abs() <= z.b_zy.sqrt() * q.abs() + O_TOL)
    })
}

/// Extremes of β over all feasible grid points.
pub fn brute_force(
    theta: &EstimableParams,
    cons: &CompiledConstraints,
    n_a: usize,
    n_b: usize,
    n_g: usize,
) -> Option<OracleResult> {
    let gs = linspace(-1.0 + 1e-9, 1.0 - 1e-9, n_g);
    let bs = linspace(-1.0, 1.0, n_b);
    let mut out: Option<OracleResult> = None;
    for a in linspace(cons.a.lo, cons.a.hi, n_a) {
        for &b in &bs {
            if !feasible(theta, cons, a, b, &gs) {
                continue;
            }
            let v = beta_at(theta, a, b);
            let o = out.get_or_insert(OracleResult { lower: v, upper: v, argmin: (a, b), argmax: (a, b) });
            if v < o.lower {
                o.lower = v;
                o.argmin = (a, b);
            }
            if v > o.upper {
                o.upper = v;
                o.argmax = (a, b);
            }
        }
    }
    out
}

/// Largest change of β within a cell of half-widths `(da, db)` around `(a, b)`.
pub fn cell_tolerance(theta: &EstimableParams, a: f64, b: f64, da: f64, db: f64) -> f64 {
    let v = beta_at(theta, a, b);
    let mut worst: f64 = 0.0;
    for sa in [-1.0, 0.0, 1.0] {
        for sb in [-1.0, 0.0, 1.0] {
            let aa = (a + sa * da).clamp(-0.999_999, 0.999_999);
            let bb = (b + sb * db).clamp(-1.0, 1.0);
            worst = worst.max((beta_at(theta, aa, bb) - v).abs());
        }
    }
    worst
}
