//! Covariance-matrix algebra for (partial) R-, R²- and f-values.
//!
//! Every quantity is a function of a centred covariance matrix. Residual
//! variances are Schur complements computed through a Cholesky factor of the
//! conditioning block; a pivot below `1e-10` times the largest diagonal entry
//! of that block is reported as [`Error::SingularConditioningSet`].
//!
//! Index slices play the role of variable sets. An empty slice is the empty
//! conditioning set.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative pivot tolerance of the Cholesky factorization.
pub const PIVOT_TOL: f64 = 1e-10;

/// Threshold below which `1 - R²` counts as zero.
pub const UNIT_TOL: f64 = 1e-12;

/// A symmetric positive-definite covariance matrix over named variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    names: Vec<String>,
    sigma: DMatrix<f64>,
}

impl Covariance {
    /// Validates symmetry (relative tolerance 1e-12) and positive definiteness.
    /// The stored matrix is symmetrized exactly.
    pub fn new(names: Vec<String>, sigma: DMatrix<f64>) -> Result<Self> {
        let p = names.len();
        if sigma.nrows() != p || sigma.ncols() != p {
            return Err(Error::InvalidCovariance(format!(
                "{} names for a {}x{} matrix",
                p,
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if p == 0 {
            return Err(Error::InvalidCovariance("no variables".into()));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariance("non-finite entry".into()));
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(Error::InvalidCovariance(format!("duplicate name `{a}`")));
            }
        }
        let scale = sigma.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..p {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidCovariance(format!(
                        "not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let all: Vec<usize> = (0..p).collect();
        cholesky(&sigma, &all)?;
        Ok(Self { names, sigma })
    }

    /// Builds a covariance with generated names `v0, v1, ...`.
    pub fn unnamed(sigma: DMatrix<f64>) -> Result<Self> {
        let names = (0..sigma.nrows()).map(|i| format!("v{i}")).collect();
        Self::new(names, sigma)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Restriction to the listed variables, in the listed order.
    pub fn subset(&self, idx: &[usize]) -> Covariance {
        let sigma = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.sigma[(idx[i], idx[j])]);
        let names = idx.iter().map(|&i| self.names[i].clone()).collect();
        Covariance { names, sigma }
    }

    /// Var(target ⊥ given) as a Schur complement.
    pub fn residual_variance(&self, target: &[usize], given: &[usize]) -> Result<DMatrix<f64>> {
        self.check_indices(target)?;
        self.check_indices(given)?;
        if target.iter().any(|t| given.contains(t)) {
            return Err(Error::PreconditionViolated(
                "target and conditioning set overlap".into(),
            ));
        }
        let st = DMatrix::from_fn(target.len(), target.len(), |i, j| {
            self.sigma[(target[i], target[j])]
        });
        if given.is_empty() {
            return Ok(st);
        }
        let l = cholesky(&self.sigma, given)?;
        let sgt = DMatrix::from_fn(given.len(), target.len(), |i, j| {
            self.sigma[(given[i], target[j])]
        });
        let w = forward_solve(&l, sgt);
        let mut out = st - w.transpose() * &w;
        symmetrize(&mut out);
        Ok(out)
    }

    /// Residual standard deviation σ_{y∼given}.
    pub fn sigma_resid(&self, y: usize, given: &[usize]) -> Result<f64> {
        let v = self.residual_variance(&[y], given)?[(0, 0)];
        Ok(v.max(0.0).sqrt())
    }

    /// R²_{y∼x|z}.
    pub fn partial_r2(&self, y: usize, x: &[usize], z: &[usize]) -> Result<f64> {
        disjoint(&[&[y], x, z])?;
        if x.is_empty() {
            return Ok(0.0);
        }
        let vy = self.sigma[(y, y)];
        let vz = self.residual_variance(&[y], z)?[(0, 0)];
        if vz < UNIT_TOL * vy {
            return Err(Error::DegenerateDenominator("partial R² (1 - R²(y~z))"));
        }
        let xz = concat(x, z);
        let vxz = self.residual_variance(&[y], &xz)?[(0, 0)];
        Ok(((vz - vxz) / vz).clamp(0.0, 1.0))
    }

    /// R_{y∼x|z} for scalar x.
    pub fn partial_r(&self, y: usize, x: usize, z: &[usize]) -> Result<f64> {
        disjoint(&[&[y], &[x], z])?;
        let r = self.residual_variance(&[y, x], z)?;
        let (vy, vx) = (r[(0, 0)], r[(1, 1)]);
        if vy < UNIT_TOL * self.sigma[(y, y)] || vx < UNIT_TOL * self.sigma[(x, x)] {
            return Err(Error::DegenerateDenominator("partial R (residual variance)"));
        }
        Ok((r[(0, 1)] / (vy * vx).sqrt()).clamp(-1.0, 1.0))
    }

    /// f_{y∼x|z} for scalar x; infinite when R² = 1.
    pub fn f_value(&self, y: usize, x: usize, z: &[usize]) -> Result<f64> {
        self.partial_r(y, x, z).map(f_from_r)
    }

    /// f²_{y∼x|z}; infinite when R² = 1.
    pub fn f2_value(&self, y: usize, x: &[usize], z: &[usize]) -> Result<f64> {
        self.partial_r2(y, x, z).map(f2_from_r2)
    }

    /// Coefficient of scalar x in the regression of y on (x, z).
    pub fn beta(&self, y: usize, x: usize, z: &[usize]) -> Result<f64> {
        disjoint(&[&[y], &[x], z])?;
        let r = self.residual_variance(&[y, x], z)?;
        if r[(1, 1)] < UNIT_TOL * self.sigma[(x, x)] {
            return Err(Error::DegenerateDenominator("regression coefficient"));
        }
        Ok(r[(0, 1)] / r[(1, 1)])
    }

    /// Rescales variable `k` by `s`.
    pub fn rescaled(&self, k: usize, s: f64) -> Covariance {
        let mut t = DMatrix::identity(self.dim(), self.dim());
        t[(k, k)] = s;
        self.transformed(&t)
    }

    /// Replaces `target` by its residual after projecting onto `against ⊥ given`.
    ///
    /// The new variable is uncorrelated with every residual `a ⊥ given`, so
    /// R_{target∼a|given} = 0 for each a in `against`.
    pub fn orthogonalize(&self, target: usize, against: &[usize], given: &[usize]) -> Result<Covariance> {
        disjoint(&[&[target], against, given])?;
        if against.is_empty() {
            return Ok(self.clone());
        }
        let p = self.dim();
        let var_a = self.residual_variance(against, given)?;
        let sig = |r: &[usize], c: &[usize]| {
            DMatrix::from_fn(r.len(), c.len(), |i, j| self.sigma[(r[i], c[j])])
        };
        // a ⊥ given = a - B g with B = Σ_ag Σ_gg⁻¹
        let b = if given.is_empty() {
            DMatrix::zeros(against.len(), 0)
        } else {
            let sgg = sig(given, given);
            let sga = sig(given, against);
            let inv = sgg
                .cholesky()
                .ok_or(Error::SingularConditioningSet { pivot: 0.0, tol: PIVOT_TOL })?;
            inv.solve(&sga).transpose()
        };
        let cov_at = sig(against, &[target]) - &b * sig(given, &[target]);
        let chol = var_a
            .clone()
            .cholesky()
            .ok_or(Error::SingularConditioningSet { pivot: 0.0, tol: PIVOT_TOL })?;
        let w = chol.solve(&cov_at);
        let mut t = DMatrix::identity(p, p);
        for (k, &a) in against.iter().enumerate() {
            t[(target, a)] -= w[k];
        }
        let bw = b.transpose() * &w;
        for (k, &g) in given.iter().enumerate() {
            t[(target, g)] += bw[k];
        }
        Ok(self.transformed(&t))
    }

    fn transformed(&self, t: &DMatrix<f64>) -> Covariance {
        let mut sigma = t * &self.sigma * t.transpose();
        symmetrize(&mut sigma);
        Covariance { names: self.names.clone(), sigma }
    }

    fn check_indices(&self, idx: &[usize]) -> Result<()> {
        for (k, &i) in idx.iter().enumerate() {
            if i >= self.dim() {
                return Err(Error::PreconditionViolated(format!("index {i} out of range")));
            }
            if idx[..k].contains(&i) {
                return Err(Error::PreconditionViolated(format!("index {i} repeated")));
            }
        }
        Ok(())
    }
}

/// Assignment of variables to the outcome, treatment, instrument and covariate roles.
///
/// `xdot` holds the covariates eligible as benchmarks; `xtilde` the rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Roles {
    pub y: usize,
    pub d: usize,
    pub z: Option<usize>,
    pub xdot: Vec<usize>,
    pub xtilde: Vec<usize>,
}

impl Roles {
    /// All covariates, X̃ first.
    pub fn x(&self) -> Vec<usize> {
        concat(&self.xtilde, &self.xdot)
    }

    /// Covariates followed by the instrument, if any.
    pub fn xz(&self) -> Vec<usize> {
        let mut v = self.x();
        v.extend(self.z);
        v
    }
}

/// A covariance matrix together with its role assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub cov: Covariance,
    pub roles: Roles,
}

impl CovarianceModel {
    pub fn new(cov: Covariance, roles: Roles) -> Result<Self> {
        let mut used = vec![roles.y, roles.d];
        used.extend(roles.z);
        used.extend(&roles.xdot);
        used.extend(&roles.xtilde);
        for (k, &i) in used.iter().enumerate() {
            if i >= cov.dim() {
                return Err(Error::RoleMismatch(format!("index {i} out of range")));
            }
            if used[..k].contains(&i) {
                return Err(Error::RoleMismatch(format!(
                    "variable `{}` has more than one role",
                    cov.names()[i]
                )));
            }
        }
        Ok(Self { cov, roles })
    }

    /// Resolves roles by variable name.
    pub fn from_names<S: AsRef<str>>(
        cov: Covariance,
        y: &str,
        d: &str,
        z: Option<&str>,
        xdot: &[S],
        xtilde: &[S],
    ) -> Result<Self> {
        let find = |n: &str| {
            cov.index(n)
                .ok_or_else(|| Error::RoleMismatch(format!("unknown variable `{n}`")))
        };
        let roles = Roles {
            y: find(y)?,
            d: find(d)?,
            z: z.map(find).transpose()?,
            xdot: xdot.iter().map(|n| find(n.as_ref())).collect::<Result<_>>()?,
            xtilde: xtilde.iter().map(|n| find(n.as_ref())).collect::<Result<_>>()?,
        };
        Self::new(cov, roles)
    }
}

/// f = R/√(1−R²), returning ±∞ when R² = 1 within tolerance.
pub fn f_from_r(r: f64) -> f64 {
    let den = 1.0 - r * r;
    if den <= UNIT_TOL {
        if r == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(r)
        }
    } else {
        r / den.sqrt()
    }
}

/// f² = R²/(1−R²), returning +∞ when R² = 1 within tolerance.
pub fn f2_from_r2(r2: f64) -> f64 {
    let den = 1.0 - r2;
    if den <= UNIT_TOL {
        f64::INFINITY
    } else {
        r2 / den
    }
}

/// Inverse of [`f_from_r`]; maps ±∞ to ±1.
pub fn r_from_f(f: f64) -> f64 {
    if f.is_infinite() || f.abs() > 1e150 {
        1.0_f64.copysign(f)
    } else {
        f / (1.0 + f * f).sqrt()
    }
}

/// Concatenation of two index sets.
pub fn concat(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

fn disjoint(sets: &[&[usize]]) -> Result<()> {
    for (k, s) in sets.iter().enumerate() {
        for t in &sets[k + 1..] {
            if s.iter().any(|i| t.contains(i)) {
                return Err(Error::PreconditionViolated("variable sets overlap".into()));
            }
        }
    }
    Ok(())
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor of Σ restricted to `idx`, with the relative pivot check.
fn cholesky(sigma: &DMatrix<f64>, idx: &[usize]) -> Result<DMatrix<f64>> {
    let n = idx.len();
    let maxdiag = idx.iter().fold(0.0_f64, |m, &i| m.max(sigma[(i, i)]));
    let tol = PIVOT_TOL * maxdiag;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut piv = sigma[(idx[j], idx[j])];
        for k in 0..j {
            piv -= l[(j, k)] * l[(j, k)];
        }
        if !(piv > tol) {
            return Err(Error::SingularConditioningSet { pivot: piv, tol });
        }
        let ljj = piv.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = sigma[(idx[i], idx[j])];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

fn forward_solve(l: &DMatrix<f64>, mut b: DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
    }
    b
}

/// Population covariance of (U, X, D, Y) in the regression simulation.
pub fn regression_sim_covariance() -> Covariance {
    let sigma = DMatrix::from_row_slice(
        4,
        4,
        &[1., 0., 1., 2., 0., 1., 1., 3., 1., 1., 3., 6., 2., 3., 6., 15.],
    );
    Covariance::new(vec!["U".into(), "X".into(), "D".into(), "Y".into()], sigma)
        .expect("population matrix is positive definite")
}

/// Population covariance of (U, Z, D, Y) in the instrumental-variable simulation.
pub fn iv_sim_covariance() -> Covariance {
    let sigma = DMatrix::from_row_slice(
        4,
        4,
        &[1., 0., 1., 2., 0., 1., 1., 1., 1., 1., 3., 4., 2., 1., 4., 7.],
    );
    Covariance::new(vec!["U".into(), "Z".into(), "D".into(), "Y".into()], sigma)
        .expect("population matrix is positive definite")
}

#[cfg(test)]
mod tests {
    use super::*;

    const U: usize = 0;
    const X: usize = 1;
    const D: usize = 2;
    const Y: usize = 3;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn residual_variance_matches_hand_schur() {
        let c = regression_sim_covariance();
        assert!(close(c.residual_variance(&[D], &[X]).unwrap()[(0, 0)], 2.0, 1e-12));
        assert!(close(c.residual_variance(&[Y], &[X, D]).unwrap()[(0, 0)], 1.5, 1e-12));
        assert_eq!(c.residual_variance(&[Y], &[]).unwrap()[(0, 0)], 15.0);
    }

    #[test]
    fn partial_r2_values() {
        let c = regression_sim_covariance();
        assert!(close(c.partial_r2(D, &[U], &[X]).unwrap(), 0.5, 1e-12));
        assert!(close(c.partial_r2(Y, &[U], &[X, D]).unwrap(), 1.0 / 3.0, 1e-12));
        assert!(close(c.partial_r2(Y, &[X], &[]).unwrap(), 0.6, 1e-12));
        assert_eq!(c.partial_r2(Y, &[], &[X]).unwrap(), 0.0);
    }

    #[test]
    fn partial_r_values() {
        let c = regression_sim_covariance();
        assert!(close(c.partial_r(Y, D, &[X]).unwrap(), 3f64.sqrt() / 2.0, 1e-12));
        assert!(close(c.partial_r(Y, U, &[X, D]).unwrap(), 1.0 / 3f64.sqrt(), 1e-12));
        assert_eq!(c.partial_r(U, X, &[]).unwrap(), 0.0);
    }

    #[test]
    fn f_values() {
        assert!(close(f_from_r(1.0 / 2f64.sqrt()), 1.0, 1e-12));
        assert_eq!(f_from_r(0.0), 0.0);
        assert_eq!(f_from_r(1.0), f64::INFINITY);
        assert_eq!(f_from_r(-1.0), f64::NEG_INFINITY);
        assert_eq!(f2_from_r2(1.0), f64::INFINITY);
        assert_eq!(r_from_f(f64::NEG_INFINITY), -1.0);
        let c = regression_sim_covariance();
        assert!(close(c.f_value(D, U, &[X]).unwrap(), 1.0, 1e-12));
        assert!(close(c.f2_value(D, &[U], &[X]).unwrap(), 1.0, 1e-12));
    }

    #[test]
    fn singular_conditioning_set_is_reported() {
        let sigma = DMatrix::from_row_slice(3, 3, &[1., 1., 0., 1., 1., 0., 0., 0., 1.]);
        let err = Covariance::unnamed(sigma).unwrap_err();
        assert!(matches!(err, Error::SingularConditioningSet { .. }));
    }

    #[test]
    fn rejects_asymmetric_input() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1., 0.5, 0.4, 1.]);
        assert!(matches!(Covariance::unnamed(sigma), Err(Error::InvalidCovariance(_))));
    }

    #[test]
    fn overlapping_sets_are_rejected() {
        let c = regression_sim_covariance();
        assert!(c.partial_r2(Y, &[X], &[X]).is_err());
        assert!(c.residual_variance(&[Y], &[Y]).is_err());
    }

    #[test]
    fn orthogonalize_removes_partial_correlation() {
        let c = regression_sim_covariance();
        let o = c.orthogonalize(Y, &[D], &[X]).unwrap();
        assert!(o.partial_r(Y, D, &[X]).unwrap().abs() < 1e-12);
        let o = c.orthogonalize(Y, &[D, U], &[]).unwrap();
        assert!(o.partial_r2(Y, &[D, U], &[]).unwrap() < 1e-12);
    }

    #[test]
    fn beta_is_regression_coefficient() {
        let c = regression_sim_covariance();
        assert!(close(c.beta(Y, D, &[X]).unwrap(), 1.5, 1e-12));
        assert!(close(c.beta(Y, D, &[X, U]).unwrap(), 1.0, 1e-12));
    }
}
