//! Random covariance models shared by the integration tests.
#![allow(dead_code)]

pub mod oracle;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sensopt::r2calc::{Covariance, CovarianceModel, Roles};
use sensopt::simharness::random_pd_matrix;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Random positive definite covariance with random variable scales.
pub fn random_cov<R: Rng>(rng: &mut R, p: usize) -> Covariance {
    let mut s = random_pd_matrix(rng, p, 0.1);
    let scale: Vec<f64> = (0..p).map(|_| (rng.random::<f64>() * 3.0 - 1.5).exp()).collect();
    for i in 0..p {
        for j in 0..p {
            s[(i, j)] *= scale[i] * scale[j];
        }
    }
    Covariance::unnamed(s).unwrap()
}

/// A random model over `U, Z, D, Y, Ẋ…, X̃…` with `U` at index 0 and no role.
///
/// When `orthogonal` is set, `U` is made uncorrelated with `Ẋ` given `(X̃, Z)`.
pub struct RandomModel {
    pub model: CovarianceModel,
    pub u: usize,
}

pub fn random_model<R: Rng>(rng: &mut R, n_xdot: usize, n_xtilde: usize, with_z: bool, orthogonal: bool) -> RandomModel {
    let p = 3 + usize::from(with_z) + n_xdot + n_xtilde;
    let mut cov = random_cov(rng, p);
    let z0 = usize::from(with_z);
    let (d, y) = (1 + z0, 2 + z0);
    let xdot: Vec<usize> = (3 + z0..3 + z0 + n_xdot).collect();
    let xtilde: Vec<usize> = (3 + z0 + n_xdot..p).collect();
    if orthogonal {
        let mut given = xtilde.clone();
        if with_z {
            given.push(1);
        }
        cov = cov.orthogonalize(0, &xdot, &given).unwrap();
    }
    let roles = Roles { y, d, z: with_z.then_some(1), xdot, xtilde };
    RandomModel { model: CovarianceModel::new(cov, roles).unwrap(), u: 0 }
}

/// Random disjoint index sets of the given sizes drawn from `0..p`.
pub fn disjoint_sets<R: Rng>(rng: &mut R, p: usize, sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..p).collect();
    for i in (1..p).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let mut out = Vec::new();
    let mut k = 0;
    for &s in sizes {
        out.push(idx[k..k + s].to_vec());
        k += s;
    }
    out
}

#[track_caller]
pub fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!(
        (got - want).abs() <= tol * (1.0 + want.abs()),
        "{what}: got {got:e}, want {want:e}"
    );
}

use sensopt::sensmodel::{SensitivityBound, SensitivityModel};

/// Random bounds for a model from [`random_model`] with two `Ẋ` covariates.
pub fn random_bounds<R: Rng>(rng: &mut R, m: &CovarianceModel, iv: bool) -> SensitivityModel {
    let (x0, x1) = (m.roles.xdot[0], m.roles.xdot[1]);
    let mut b = Vec::new();
    let r = |rng: &mut R, lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    if rng.random_bool(0.5) {
        b.push(SensitivityBound::CompUD { given: vec![], compare: vec![x0], b: r(rng, 0.2, 3.0) });
    } else {
        let w = r(rng, 0.2, 0.9);
        b.push(SensitivityBound::DirectUD { lo: -w, hi: w });
    }
    match rng.random_range(0..3) {
        0 => {
            let w = r(rng, 0.1, 0.9);
            b.push(SensitivityBound::DirectUY { lo: -w, hi: w });
        }
        1 => b.push(SensitivityBound::CompUYUncondD { given: vec![], compare: vec![x0], b: r(rng, 0.2, 3.0) }),
        _ => b.push(SensitivityBound::CompUYCondD { given: vec![x1], compare: vec![x0], b: r(rng, 0.2, 3.0) }),
    }
    if iv {
        let w = r(rng, 0.05, 0.3);
        b.push(SensitivityBound::DirectUZ { lo: -w, hi: w });
        if rng.random_bool(0.5) {
            let w = r(rng, 0.05, 0.3);
            b.push(SensitivityBound::DirectZY { lo: -w, hi: w });
        } else {
            b.push(SensitivityBound::CompZY { j: x1, b: r(rng, 0.5, 3.0) });
        }
    }
    SensitivityModel::new(b)
}

/// The same bounds made weaker by random factors in `[1, 3]`.
pub fn widen<R: Rng>(rng: &mut R, sens: &SensitivityModel) -> SensitivityModel {
    let bounds = sens
        .bounds
        .iter()
        .map(|bd| {
            let k = 1.0 + 2.0 * rng.random::<f64>();
            match bd.direct() {
                Some(iv) => {
                    let lo = (iv.lo * k).max(-1.0);
                    let hi = (iv.hi * k).min(1.0);
                    match bd {
                        SensitivityBound::DirectUD { .. } => SensitivityBound::DirectUD { lo, hi },
                        SensitivityBound::DirectUY { .. } => SensitivityBound::DirectUY { lo, hi },
                        SensitivityBound::DirectUZ { .. } => SensitivityBound::DirectUZ { lo, hi },
                        _ => SensitivityBound::DirectZY { lo, hi },
                    }
                }
                None => bd.with_factor(bd.factor().unwrap() * k),
            }
        })
        .collect();
    SensitivityModel::new(bounds)
}
