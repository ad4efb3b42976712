//! Plug-in estimation: covariance matrix in, region endpoints out.

use crate::error::{Error, Result};
use crate::estimands::EstimableParams;
use crate::gridopt::{solve_pir, GridParams, PirEstimate};
use crate::r2calc::{Covariance, CovarianceModel, Roles};
use crate::sensmodel::{compile, CompiledConstraints, SensitivityModel};

/// A fixed role assignment, sensitivity model and grid.
///
/// Role indices refer to the variable order of every covariance passed in.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub roles: Roles,
    pub sens: SensitivityModel,
    pub grid: GridParams,
}

/// Everything produced by one plug-in solve.
#[derive(Debug, Clone)]
pub struct Solved {
    pub model: CovarianceModel,
    pub theta: EstimableParams,
    pub cons: CompiledConstraints,
    pub pir: PirEstimate,
}

impl Solved {
    /// `(lower, upper)`, or an error when every slice is infeasible.
    pub fn endpoints(&self) -> Result<(f64, f64)> {
        match (self.pir.lower, self.pir.upper) {
            (Some(l), Some(u)) => Ok((l, u)),
            _ => Err(Error::ModelInfeasibleOnSample),
        }
    }
}

impl Analysis {
    pub fn new(roles: Roles, sens: SensitivityModel, grid: GridParams) -> Self {
        Self { roles, sens, grid }
    }

    pub fn solve(&self, cov: Covariance) -> Result<Solved> {
        self.grid.validate()?;
        let model = CovarianceModel::new(cov, self.roles.clone())?;
        let (theta, cons) = compile(&self.sens, &model)?;
        let pir = solve_pir(&theta, &cons, &self.grid);
        Ok(Solved { model, theta, cons, pir })
    }

    /// Endpoints for resampling: any failure maps to `(−∞, +∞)`.
    pub fn endpoints_or_unbounded(&self, cov: Result<Covariance>) -> (f64, f64) {
        cov.and_then(|c| self.solve(c))
            .and_then(|s| s.endpoints())
            .unwrap_or((f64::NEG_INFINITY, f64::INFINITY))
    }
}
