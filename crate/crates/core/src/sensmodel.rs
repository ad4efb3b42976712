//! Sensitivity bounds and their compilation into optimization constraints.
//!
//! Direct bounds restrict a sensitivity parameter to an interval. Comparative
//! bounds tie the explanatory power of the unmeasured confounder `U` to that
//! of observed benchmark covariates in `Ẋ`; compilation turns them into
//! intervals on auxiliary partial correlations plus the equality links that
//! connect those auxiliaries to the primary parameters `a = R_{D∼U|X,Z}` and
//! `b = R_{Y∼U|X,Z,D}`.
//!
//! Comparative bounds assume `R²_{U∼Ẋ|X̃,Z} = 0`. This is a modeling
//! assumption and is not checked.
//!
//! Auxiliary parameters:
//!
//! | name | partial correlation |
//! |------|---------------------|
//! | d | `R_{Y∼U|X,Z}` |
//! | e | `R_{Y∼U|X̃,Ẋ_I,Z,D}` |
//! | g | `R_{Z∼U|X,D}` |
//! | m | `R_{Z∼U|X}` |
//! | o | `R_{Y∼Z|X,U,D}` |
//! | q | `R_{Y∼Ẋ_j|X̃,Ẋ_{-j},Z,U,D}` |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimands::{estimate_theta, EstimableParams, SensitivityPoint};
use crate::r2calc::{f_from_r, CovarianceModel, UNIT_TOL};

/// Default range of `a` when no bound on the U→D edge is given.
pub const DEFAULT_A_LIMIT: f64 = 0.999;

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNIT: Interval = Interval { lo: -1.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn symmetric(r: f64) -> Self {
        Self { lo: -r, hi: r }
    }

    pub fn intersect(self, other: Interval) -> Interval {
        Interval { lo: self.lo.max(other.lo), hi: self.hi.min(other.hi) }
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

/// A user-facing sensitivity bound.
///
/// Covariate sets (`given` = I, `compare` = J) and `j` are variable indices of
/// the covariance model and must belong to the `Ẋ` role.
#[derive(Debug, Clone, PartialEq)]
pub enum SensitivityBound {
    /// `R_{D∼U|X,Z} ∈ [lo, hi]`.
    DirectUD { lo: f64, hi: f64 },
    /// `R²_{D∼U|X̃,Ẋ_I,Z} ≤ b·R²_{D∼Ẋ_J|X̃,Ẋ_I,Z}`.
    CompUD { given: Vec<usize>, compare: Vec<usize>, b: f64 },
    /// `R_{Y∼U|X,Z,D} ∈ [lo, hi]`.
    DirectUY { lo: f64, hi: f64 },
    /// `R²_{Y∼U|X̃,Ẋ_I,Z} ≤ b·R²_{Y∼Ẋ_J|X̃,Ẋ_I,Z}`.
    CompUYUncondD { given: Vec<usize>, compare: Vec<usize>, b: f64 },
    /// `R²_{Y∼U|X̃,Ẋ_I,Z,D} ≤ b·R²_{Y∼Ẋ_J|X̃,Ẋ_I,Z,D}`.
    CompUYCondD { given: Vec<usize>, compare: Vec<usize>, b: f64 },
    /// `R_{Z∼U|X} ∈ [lo, hi]`.
    DirectUZ { lo: f64, hi: f64 },
    /// `R²_{Z∼U|X̃,Ẋ_{-j}} ≤ b·R²_{Z∼Ẋ_j|X̃,Ẋ_{-j}}`.
    CompUZ { j: usize, b: f64 },
    /// `R_{Y∼Z|X,U,D} ∈ [lo, hi]`.
    DirectZY { lo: f64, hi: f64 },
    /// `R²_{Y∼Z|X,U,D} ≤ b·R²_{Y∼Ẋ_j|X̃,Ẋ_{-j},Z,U,D}`.
    CompZY { j: usize, b: f64 },
}

impl SensitivityBound {
    /// Bounds on the U↔Z or Z→Y edges require an instrument.
    pub fn is_iv_edge(&self) -> bool {
        matches!(
            self,
            Self::DirectUZ { .. } | Self::CompUZ { .. } | Self::DirectZY { .. } | Self::CompZY { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::DirectUD { .. } => "direct_ud",
            Self::CompUD { .. } => "comp_ud",
            Self::DirectUY { .. } => "direct_uy",
            Self::CompUYUncondD { .. } => "comp_uy",
            Self::CompUYCondD { .. } => "comp_uy_cond_d",
            Self::DirectUZ { .. } => "direct_uz",
            Self::CompUZ { .. } => "comp_uz",
            Self::DirectZY { .. } => "direct_zy",
            Self::CompZY { .. } => "comp_zy",
        }
    }

    /// The comparative factor, if any.
    pub fn factor(&self) -> Option<f64> {
        match self {
            Self::CompUD { b, .. }
            | Self::CompUYUncondD { b, .. }
            | Self::CompUYCondD { b, .. }
            | Self::CompUZ { b, .. }
            | Self::CompZY { b, .. } => Some(*b),
            _ => None,
        }
    }

    /// Copy with the comparative factor replaced; direct bounds are returned unchanged.
    pub fn with_factor(&self, nb: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            Self::CompUD { b, .. }
            | Self::CompUYUncondD { b, .. }
            | Self::CompUYCondD { b, .. }
            | Self::CompUZ { b, .. }
            | Self::CompZY { b, .. } => *b = nb,
            _ => {}
        }
        out
    }

    /// The direct interval, if any.
    pub fn direct(&self) -> Option<Interval> {
        match self {
            Self::DirectUD { lo, hi }
            | Self::DirectUY { lo, hi }
            | Self::DirectUZ { lo, hi }
            | Self::DirectZY { lo, hi } => Some(Interval::new(*lo, *hi)),
            _ => None,
        }
    }
}

/// A list of sensitivity bounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensitivityModel {
    pub bounds: Vec<SensitivityBound>,
}

impl SensitivityModel {
    pub fn new(bounds: Vec<SensitivityBound>) -> Self {
        Self { bounds }
    }

    pub fn has_iv_edges(&self) -> bool {
        self.bounds.iter().any(SensitivityBound::is_iv_edge)
    }

    /// Checks the bounds against the role assignment.
    pub fn validate(&self, model: &CovarianceModel) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::EmptyModel);
        }
        let roles = &model.roles;
        let xdot = &roles.xdot;
        let name = |i: usize| {
            model.cov.names().get(i).cloned().unwrap_or_else(|| format!("#{i}"))
        };
        let in_xdot = |set: &[usize]| -> Result<()> {
            for &i in set {
                if !xdot.contains(&i) {
                    return Err(Error::RoleMismatch(format!(
                        "`{}` is not a benchmark covariate",
                        name(i)
                    )));
                }
            }
            Ok(())
        };
        for bound in &self.bounds {
            if bound.is_iv_edge() && roles.z.is_none() {
                return Err(Error::RoleMismatch(format!(
                    "bound `{}` needs an instrument role",
                    bound.kind()
                )));
            }
            if let Some(iv) = bound.direct() {
                if !(iv.lo > -1.0 - 1e-15 && iv.lo <= iv.hi && iv.hi < 1.0 + 1e-15) {
                    return Err(Error::Config(format!(
                        "direct bound `{}` needs -1 <= lo <= hi <= 1, got [{}, {}]",
                        bound.kind(),
                        iv.lo,
                        iv.hi
                    )));
                }
            }
            if let Some(b) = bound.factor() {
                if !(b >= 0.0 && b.is_finite()) {
                    return Err(Error::Config(format!(
                        "comparative factor of `{}` must be finite and nonnegative",
                        bound.kind()
                    )));
                }
            }
            match bound {
                SensitivityBound::CompUD { given, compare, .. }
                | SensitivityBound::CompUYUncondD { given, compare, .. }
                | SensitivityBound::CompUYCondD { given, compare, .. } => {
                    in_xdot(given)?;
                    in_xdot(compare)?;
                    if compare.is_empty() {
                        return Err(Error::RoleMismatch(format!(
                            "bound `{}` compares against an empty set",
                            bound.kind()
                        )));
                    }
                    if compare.iter().any(|c| given.contains(c)) {
                        return Err(Error::RoleMismatch(format!(
                            "bound `{}`: compared and conditioned covariates overlap",
                            bound.kind()
                        )));
                    }
                    for (k, c) in compare.iter().enumerate() {
                        if compare[..k].contains(c) {
                            return Err(Error::RoleMismatch("repeated covariate".into()));
                        }
                    }
                    for (k, c) in given.iter().enumerate() {
                        if given[..k].contains(c) {
                            return Err(Error::RoleMismatch("repeated covariate".into()));
                        }
                    }
                }
                SensitivityBound::CompUZ { j, .. } | SensitivityBound::CompZY { j, .. } => {
                    in_xdot(&[*j])?;
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// An interval bound on `e` together with the constants of its link to `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EBound {
    pub interval: Interval,
    /// `R_{Y∼D|X̃,Ẋ_I,Z}`
    pub c2: f64,
    /// `√R²_{D∼Ẋ_{I^c}|X̃,Ẋ_I,Z}`
    pub c3: f64,
    /// `√R²_{Y∼Ẋ_{I^c}|X̃,Ẋ_I,Z}`
    pub c4: f64,
}

/// A comparative Z→Y bound: `|o| ≤ √b_zy·|q|` with `q` linked to `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZyBound {
    pub b_zy: f64,
    /// `R_{Y∼Ẋ_j|X̃,Ẋ_{-j},Z,D}`
    pub c7: f64,
    /// `R_{D∼Ẋ_j|X̃,Ẋ_{-j},Z}`
    pub c8: f64,
}

/// Numeric constraints on the sensitivity parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledConstraints {
    pub a: Interval,
    /// Intersection of direct bounds on `b` with `[-1, 1]`.
    pub b: Interval,
    /// Present when some bound compares `U→Y` unconditionally on D.
    pub d: Option<Interval>,
    pub e: Vec<EBound>,
    pub m: Interval,
    pub o: Interval,
    pub zy: Vec<ZyBound>,
    /// The instrument links between `(a, b)` and `(g, m, o)` are active.
    pub iv_active: bool,
    /// No bound restricted `a`, so the default range was used.
    pub a_defaulted: bool,
    pub c5: Option<f64>,
    pub c6: Option<f64>,
}

impl CompiledConstraints {
    /// Whether the U→Y side links `b` to `d` (directly or through `e`).
    pub fn links_d(&self) -> bool {
        self.d.is_some() || !self.e.is_empty()
    }

    /// Upper bound on `|o|` implied by the comparative Z→Y bounds at `(a, b)`,
    /// intersected with the direct `o`-interval.
    pub fn o_interval_at(&self, a: f64, b: f64) -> Interval {
        let mut o = self.o;
        for zb in &self.zy {
            let fq = h_fq(a, b, zb.c7, zb.c8);
            let q2 = if fq.is_infinite() { 1.0 } else { fq * fq / (1.0 + fq * fq) };
            o = o.intersect(Interval::symmetric((zb.b_zy * q2).sqrt()));
        }
        o
    }

    /// Checks a full sensitivity point against every compiled constraint.
    ///
    /// Returns the largest violation (0 when feasible). Equality links are
    /// evaluated as residuals.
    pub fn violation(&self, theta: &EstimableParams, psi: &SensitivityPoint) -> f64 {
        let excess = |x: f64, iv: Interval| (iv.lo - x).max(x - iv.hi).max(0.0);
        let mut worst = excess(psi.a, self.a).max(excess(psi.b, self.b));
        if self.links_d() {
            match psi.d {
                Some(d) => {
                    if let Some(di) = self.d {
                        worst = worst.max(excess(d, di));
                    }
                    let r = h_b(psi.a, d, theta.c1) - psi.b;
                    worst = worst.max(r.abs());
                    for (k, eb) in self.e.iter().enumerate() {
                        match psi.e.get(k) {
                            Some(&e) => {
                                worst = worst.max(excess(e, eb.interval));
                                let r = h_d(psi.a, e, eb.c2, eb.c3, eb.c4) - d;
                                worst = worst.max(r.abs());
                            }
                            None => worst = f64::INFINITY,
                        }
                    }
                }
                None => worst = f64::INFINITY,
            }
        }
        if self.iv_active {
            match (psi.g, psi.m, psi.o, self.c5, self.c6) {
                (Some(g), Some(m), Some(o), Some(c5), Some(c6)) => {
                    worst = worst.max(excess(m, self.m));
                    worst = worst.max(excess(o, self.o_interval_at(psi.a, psi.b)));
                    let [r1, r2] = eq5_residual_raw(psi.a, psi.b, g, m, o, c5, c6);
                    worst = worst.max(r1.abs()).max(r2.abs());
                }
                _ => worst = f64::INFINITY,
            }
        }
        worst
    }
}

/// `b` as a function of `(a, d)`: recursion of partial correlation.
pub fn h_b(a: f64, d: f64, c1: f64) -> f64 {
    (d - c1 * a) / ((1.0 - c1 * c1).sqrt() * (1.0 - a * a).sqrt())
}

/// `d` as a function of `(a, e)`.
pub fn h_d(a: f64, e: f64, c2: f64, c3: f64, c4: f64) -> f64 {
    let s3 = 1.0 - c3 * c3;
    (c2 * a * s3.sqrt() + e * (1.0 - c2 * c2).sqrt() * (1.0 - a * a * s3).sqrt())
        / (1.0 - c4 * c4).sqrt()
}

/// `f_g` as a function of `(a, f_m)`.
pub fn h_fg(a: f64, f_m: f64, c5: f64) -> f64 {
    ((1.0 - c5 * c5).sqrt() * f_m - c5 * a) / (1.0 - a * a).sqrt()
}

/// `f_o` as a function of `(b, g)`.
pub fn h_fo(b: f64, g: f64, f_c6: f64) -> f64 {
    ((1.0 - g * g).sqrt() * f_c6 - b * g) / (1.0 - b * b).sqrt()
}

/// `f_q` as a function of `(a, b)`.
pub fn h_fq(a: f64, b: f64, c7: f64, c8: f64) -> f64 {
    ((1.0 - a * a).sqrt() * f_from_r(c7) + c8 * a * b)
        / ((1.0 - b * b).sqrt() * (1.0 - a * a * (1.0 - c8 * c8)).sqrt())
}

/// Residuals of the two instrument link equations.
pub fn eq5_residual_raw(a: f64, b: f64, g: f64, m: f64, o: f64, c5: f64, c6: f64) -> [f64; 2] {
    let r1 = f_from_r(o) * (1.0 - b * b).sqrt()
        - (f_from_r(c6) * (1.0 - g * g).sqrt() - b * g);
    let r2 = f_from_r(g) * (1.0 - a * a).sqrt() - (f_from_r(m) * (1.0 - c5 * c5).sqrt() - c5 * a);
    [r1, r2]
}

/// Residuals (LHS − RHS) of the two instrument link equations at `psi`.
pub fn eq5_residual(theta: &EstimableParams, psi: &SensitivityPoint) -> Result<[f64; 2]> {
    let (c5, c6) = match (theta.c5, theta.c6) {
        (Some(c5), Some(c6)) => (c5, c6),
        _ => return Err(Error::InstrumentMissing),
    };
    let (g, m, o) = match (psi.g, psi.m, psi.o) {
        (Some(g), Some(m), Some(o)) => (g, m, o),
        _ => {
            return Err(Error::PreconditionViolated(
                "g, m and o are required for the instrument links".into(),
            ))
        }
    };
    for v in [psi.a, psi.b, g, m, o] {
        if 1.0 - v * v <= UNIT_TOL {
            return Err(Error::DegenerateDenominator("instrument link equations"));
        }
    }
    Ok(eq5_residual_raw(psi.a, psi.b, g, m, o, c5, c6))
}

/// Compiles a sensitivity model against a covariance model.
pub fn compile(
    sens: &SensitivityModel,
    model: &CovarianceModel,
) -> Result<(EstimableParams, CompiledConstraints)> {
    sens.validate(model)?;
    let theta = estimate_theta(model, sens)?;
    let cons = compile_with_theta(sens, &theta)?;
    Ok((theta, cons))
}

/// Builds the constraints from already estimated parameters.
pub fn compile_with_theta(
    sens: &SensitivityModel,
    theta: &EstimableParams,
) -> Result<CompiledConstraints> {
    let mut a = Interval::UNIT;
    let mut a_bounded = false;
    let mut b = Interval::UNIT;
    let mut d: Option<Interval> = None;
    let mut e = Vec::new();
    let mut m = Interval::UNIT;
    let mut o = Interval::UNIT;
    let mut zy = Vec::new();
    let (mut k_e, mut k_zy) = (0usize, 0usize);
    for (idx, bound) in sens.bounds.iter().enumerate() {
        let rhs = theta.comparative_rhs.get(&idx).copied();
        let root = || rhs.map(|r| r.clamp(0.0, 1.0).sqrt()).unwrap_or(1.0);
        match bound {
            SensitivityBound::DirectUD { lo, hi } => {
                a = a.intersect(Interval::new(*lo, *hi));
                a_bounded = true;
            }
            SensitivityBound::CompUD { .. } => {
                a = a.intersect(Interval::symmetric(root()));
                a_bounded = true;
            }
            SensitivityBound::DirectUY { lo, hi } => b = b.intersect(Interval::new(*lo, *hi)),
            SensitivityBound::CompUYUncondD { .. } => {
                let iv = Interval::symmetric(root());
                d = Some(d.map_or(iv, |x| x.intersect(iv)));
            }
            SensitivityBound::CompUYCondD { .. } => {
                e.push(EBound {
                    interval: Interval::symmetric(root()),
                    c2: theta.c2[k_e],
                    c3: theta.c3[k_e],
                    c4: theta.c4[k_e],
                });
                k_e += 1;
            }
            SensitivityBound::DirectUZ { lo, hi } => m = m.intersect(Interval::new(*lo, *hi)),
            SensitivityBound::CompUZ { .. } => m = m.intersect(Interval::symmetric(root())),
            SensitivityBound::DirectZY { lo, hi } => o = o.intersect(Interval::new(*lo, *hi)),
            SensitivityBound::CompZY { b: bzy, .. } => {
                zy.push(ZyBound { b_zy: *bzy, c7: theta.c7[k_zy], c8: theta.c8[k_zy] });
                k_zy += 1;
            }
        }
    }
    if !a_bounded {
        a = Interval::symmetric(DEFAULT_A_LIMIT);
    } else {
        if a.lo <= -1.0 + 1e-9 {
            a.lo = -DEFAULT_A_LIMIT;
        }
        if a.hi >= 1.0 - 1e-9 {
            a.hi = DEFAULT_A_LIMIT;
        }
    }
    let named = [("a", Some(a)), ("b", Some(b)), ("d", d), ("m", Some(m)), ("o", Some(o))];
    for (n, iv) in named {
        if let Some(iv) = iv {
            if iv.is_empty() {
                return Err(Error::InfeasibleAtCompile(format!(
                    "interval on {n} is empty: [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
    }
    let iv_active = sens.has_iv_edges();
    if iv_active && (theta.c5.is_none() || theta.c6.is_none()) {
        return Err(Error::InstrumentMissing);
    }
    Ok(CompiledConstraints {
        a,
        b,
        d,
        e,
        m,
        o,
        zy,
        iv_active,
        a_defaulted: !a_bounded,
        c5: theta.c5,
        c6: theta.c6,
    })
}
