//! Identification formulas: the OLS and TSLS estimands, the causal effect as a
//! function of estimable parameters θ and sensitivity parameters ψ, and bias
//! bounds for vector-valued confounders.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::r2calc::{concat, f_from_r, Covariance, CovarianceModel, UNIT_TOL};
use crate::sensmodel::{SensitivityBound, SensitivityModel};

/// Observable quantities entering the objective and the constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimableParams {
    /// `β_{Y∼D|X,Z}`
    pub beta_ols: f64,
    /// `β_{D∼Z|X, Y∼Z|X}`
    pub beta_tsls: Option<f64>,
    /// `σ_{Y∼X+Z+D} / σ_{D∼X+Z}`
    pub sigma_ratio: f64,
    /// `R_{Y∼D|X,Z}`
    pub c1: f64,
    /// `R_{Y∼D|X̃,Ẋ_I,Z}`, one per conditional U→Y comparison.
    pub c2: Vec<f64>,
    /// `√R²_{D∼Ẋ_{I^c}|X̃,Ẋ_I,Z}`, one per conditional U→Y comparison.
    pub c3: Vec<f64>,
    /// `√R²_{Y∼Ẋ_{I^c}|X̃,Ẋ_I,Z}`, one per conditional U→Y comparison.
    pub c4: Vec<f64>,
    /// `R_{D∼Z|X}`
    pub c5: Option<f64>,
    /// `R_{Y∼Z|X,D}`
    pub c6: Option<f64>,
    /// `R_{Y∼Ẋ_j|X̃,Ẋ_{-j},Z,D}`, one per Z→Y comparison.
    pub c7: Vec<f64>,
    /// `R_{D∼Ẋ_j|X̃,Ẋ_{-j},Z}`, one per Z→Y comparison.
    pub c8: Vec<f64>,
    /// Right-hand side of each comparative bound, keyed by bound position.
    pub comparative_rhs: BTreeMap<usize, f64>,
}

/// A value of the sensitivity parameters and the auxiliaries linked to them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SensitivityPoint {
    /// `R_{D∼U|X,Z}`
    pub a: f64,
    /// `R_{Y∼U|X,Z,D}`
    pub b: f64,
    /// `R_{Y∼U|X,Z}`
    pub d: Option<f64>,
    /// `R_{Y∼U|X̃,Ẋ_I,Z,D}` per conditional U→Y comparison.
    pub e: Vec<f64>,
    /// `R_{Z∼U|X,D}`
    pub g: Option<f64>,
    /// `R_{Z∼U|X}`
    pub m: Option<f64>,
    /// `R_{Y∼Z|X,U,D}`
    pub o: Option<f64>,
    /// `R_{Y∼Ẋ_j|X̃,Ẋ_{-j},Z,U,D}` per Z→Y comparison.
    pub q: Vec<f64>,
}

impl SensitivityPoint {
    pub fn ab(a: f64, b: f64) -> Self {
        Self { a, b, ..Default::default() }
    }
}

/// θ without any comparison-specific constants.
pub fn base_theta(model: &CovarianceModel) -> Result<EstimableParams> {
    let cov = &model.cov;
    let r = &model.roles;
    let xz = r.xz();
    let beta_ols = cov.beta(r.y, r.d, &xz)?;
    let s_y = cov.sigma_resid(r.y, &concat(&xz, &[r.d]))?;
    let s_d = cov.sigma_resid(r.d, &xz)?;
    if s_d <= 0.0 {
        return Err(Error::DegenerateDenominator("sigma ratio"));
    }
    let c1 = cov.partial_r(r.y, r.d, &xz)?;
    let (mut c5, mut c6, mut beta_tsls) = (None, None, None);
    if let Some(z) = r.z {
        let x = r.x();
        let c5v = cov.partial_r(r.d, z, &x)?;
        c5 = Some(c5v);
        c6 = Some(cov.partial_r(r.y, z, &concat(&x, &[r.d]))?);
        if c5v.abs() >= 1e-8 {
            let rv = cov.residual_variance(&[r.y, r.d, z], &x)?;
            beta_tsls = Some(rv[(0, 2)] / rv[(1, 2)]);
        }
    }
    Ok(EstimableParams {
        beta_ols,
        beta_tsls,
        sigma_ratio: s_y / s_d,
        c1,
        c2: vec![],
        c3: vec![],
        c4: vec![],
        c5,
        c6,
        c7: vec![],
        c8: vec![],
        comparative_rhs: BTreeMap::new(),
    })
}

/// Conditioning set `(X̃, Ẋ_I, Z)` and the complement `Ẋ_{I^c}`.
fn given_sets(model: &CovarianceModel, given: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let r = &model.roles;
    let mut w = concat(&r.xtilde, given);
    w.extend(r.z);
    let ic = r.xdot.iter().copied().filter(|i| !given.contains(i)).collect();
    (w, ic)
}

/// Conditioning set `(X̃, Ẋ_{-j})`.
fn minus_j(model: &CovarianceModel, j: usize) -> Vec<usize> {
    let r = &model.roles;
    let mut w = r.xtilde.clone();
    w.extend(r.xdot.iter().copied().filter(|&i| i != j));
    w
}

fn ratio(num: f64, one_minus: f64) -> Result<f64> {
    let den = 1.0 - one_minus;
    if den <= UNIT_TOL {
        return Err(Error::DegenerateDenominator("comparative bound"));
    }
    Ok(num / den)
}

/// Estimates θ, including the constants required by the declared bounds.
pub fn estimate_theta(model: &CovarianceModel, sens: &SensitivityModel) -> Result<EstimableParams> {
    let mut th = base_theta(model)?;
    let cov = &model.cov;
    let r = &model.roles;
    for (idx, bound) in sens.bounds.iter().enumerate() {
        if bound.is_iv_edge() && r.z.is_none() {
            return Err(Error::InstrumentMissing);
        }
        let rhs = match bound {
            SensitivityBound::CompUD { given, compare, b } => {
                let (w, ic) = given_sets(model, given);
                let num = b * cov.partial_r2(r.d, compare, &w)?;
                Some(ratio(num, cov.partial_r2(r.d, &ic, &w)?)?)
            }
            SensitivityBound::CompUYUncondD { given, compare, b } => {
                let (w, ic) = given_sets(model, given);
                let num = b * cov.partial_r2(r.y, compare, &w)?;
                Some(ratio(num, cov.partial_r2(r.y, &ic, &w)?)?)
            }
            SensitivityBound::CompUYCondD { given, compare, b } => {
                let (w, ic) = given_sets(model, given);
                let wd = concat(&w, &[r.d]);
                th.c2.push(cov.partial_r(r.y, r.d, &w)?);
                th.c3.push(cov.partial_r2(r.d, &ic, &w)?.sqrt());
                th.c4.push(cov.partial_r2(r.y, &ic, &w)?.sqrt());
                Some(b * cov.partial_r2(r.y, compare, &wd)?)
            }
            SensitivityBound::CompUZ { j, b } => {
                let z = r.z.ok_or(Error::InstrumentMissing)?;
                let r2 = cov.partial_r2(z, &[*j], &minus_j(model, *j))?;
                if b * r2 >= 1.0 {
                    Some(1.0)
                } else {
                    Some(b * r2 * (1.0 - r2) / (1.0 - b * r2 * r2))
                }
            }
            SensitivityBound::CompZY { j, b } => {
                let mut w = minus_j(model, *j);
                w.extend(r.z);
                th.c7.push(cov.partial_r(r.y, *j, &concat(&w, &[r.d]))?);
                th.c8.push(cov.partial_r(r.d, *j, &w)?);
                Some(*b)
            }
            _ => None,
        };
        if let Some(v) = rhs {
            th.comparative_rhs.insert(idx, v);
        }
    }
    Ok(th)
}

/// Reads ψ and the auxiliaries off a joint covariance that contains `U`.
///
/// `u` must not carry a role. `e` and `q` follow the order of the
/// corresponding bounds in `sens`.
pub fn read_psi(model: &CovarianceModel, u: usize, sens: &SensitivityModel) -> Result<SensitivityPoint> {
    let cov = &model.cov;
    let r = &model.roles;
    if u == r.y || u == r.d || Some(u) == r.z || r.xdot.contains(&u) || r.xtilde.contains(&u) {
        return Err(Error::RoleMismatch("confounder index carries a role".into()));
    }
    let x = r.x();
    let xz = r.xz();
    let xzd = concat(&xz, &[r.d]);
    let mut psi = SensitivityPoint {
        a: cov.partial_r(r.d, u, &xz)?,
        b: cov.partial_r(r.y, u, &xzd)?,
        d: Some(cov.partial_r(r.y, u, &xz)?),
        ..Default::default()
    };
    if let Some(z) = r.z {
        psi.g = Some(cov.partial_r(z, u, &concat(&x, &[r.d]))?);
        psi.m = Some(cov.partial_r(z, u, &x)?);
        let mut xud = concat(&x, &[u]);
        xud.push(r.d);
        psi.o = Some(cov.partial_r(r.y, z, &xud)?);
    }
    for bound in &sens.bounds {
        match bound {
            SensitivityBound::CompUYCondD { given, .. } => {
                let (w, _) = given_sets(model, given);
                psi.e.push(cov.partial_r(r.y, u, &concat(&w, &[r.d]))?);
            }
            SensitivityBound::CompZY { j, .. } => {
                let mut w = minus_j(model, *j);
                w.extend(r.z);
                w.push(u);
                w.push(r.d);
                psi.q.push(cov.partial_r(r.y, *j, &w)?);
            }
            _ => {}
        }
    }
    Ok(psi)
}

/// β = β_OLS − b·f(a)·σ-ratio without domain checks.
#[inline]
pub fn beta_at(theta: &EstimableParams, a: f64, b: f64) -> f64 {
    theta.beta_ols - b * (a / (1.0 - a * a).sqrt()) * theta.sigma_ratio
}

/// The causal effect at ψ.
pub fn causal_beta(theta: &EstimableParams, psi: &SensitivityPoint) -> Result<f64> {
    if psi.a.abs() >= 1.0 - 1e-12 {
        return Err(Error::DegenerateDenominator("f(a) at |a| = 1"));
    }
    Ok(beta_at(theta, psi.a, psi.b))
}

/// The causal effect expressed through the TSLS estimand.
pub fn tsls_gap(theta: &EstimableParams, psi: &SensitivityPoint) -> Result<f64> {
    let (c5, c6) = match (theta.c5, theta.c6) {
        (Some(c5), Some(c6)) => (c5, c6),
        _ => return Err(Error::InstrumentMissing),
    };
    if c5.abs() < 1e-8 {
        return Err(Error::WeakInstrument(c5.abs()));
    }
    let tsls = theta.beta_tsls.ok_or(Error::WeakInstrument(c5.abs()))?;
    if psi.a.abs() >= 1.0 - 1e-12 {
        return Err(Error::DegenerateDenominator("f(a) at |a| = 1"));
    }
    Ok(tsls - (f_from_r(c6) / c5 + psi.b * f_from_r(psi.a)) * theta.sigma_ratio)
}

/// Upper bound on |β_OLS − β| for a vector-valued confounder.
pub fn multi_confounder_bound(theta: &EstimableParams, r2_yu: f64, f2_du: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&r2_yu) || !(f2_du >= 0.0) {
        return Err(Error::PreconditionViolated(
            "need 0 <= R²(Y~U|X,Z,D) < 1 and f²(D~U|X,Z) >= 0".into(),
        ));
    }
    Ok((r2_yu * f2_du).sqrt() * theta.sigma_ratio)
}

/// β_{Y∼D|XZ} − β_{Y∼D|XZ,U} computed by direct regression.
pub fn direct_bias(cov: &Covariance, y: usize, d: usize, xz: &[usize], u: &[usize]) -> Result<f64> {
    Ok(cov.beta(y, d, xz)? - cov.beta(y, d, &concat(xz, u))?)
}

/// Bias as a sum over partially uncorrelated confounder components.
///
/// Requires `R_{U_i∼U_j|X,Z} = 0` (within 1e-9) for all pairs.
pub fn bias_uncorrelated_confounders(
    cov: &Covariance,
    y: usize,
    d: usize,
    xz: &[usize],
    u: &[usize],
) -> Result<f64> {
    for (i, &ui) in u.iter().enumerate() {
        for &uj in &u[i + 1..] {
            let r = cov.partial_r(ui, uj, xz)?;
            if r.abs() > 1e-9 {
                return Err(Error::PreconditionViolated(format!(
                    "confounder components correlated given X,Z (R = {r:e})"
                )));
            }
        }
    }
    let mut total = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        let mut rest = concat(xz, &[d]);
        rest.extend(u.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, &v)| v));
        total += cov.beta(y, uj, &rest)? * cov.beta(uj, d, xz)?;
    }
    Ok(total)
}

/// Bias for two partially uncorrelated confounders in terms of
/// `R_j = R_{Y∼U_j|X,Z,D,U_{-j}}` and `f_j = f_{D∼U_j|X,Z}`.
pub fn two_confounder_bias(r: [f64; 2], f: [f64; 2], sigma_ratio: f64) -> f64 {
    let mut total = 0.0;
    for j in 0..2 {
        let k = 1 - j;
        let t = r[k] * ((1.0 - r[j] * r[j]) / (1.0 - r[k] * r[k])).sqrt() - r[j] * f[j] * f[k];
        let den = (1.0 - f[j] * f[j] * f[k] * f[k] + t * t).sqrt();
        total += r[j] * f[j] / den;
    }
    total * sigma_ratio
}
