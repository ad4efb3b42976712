//! TOML analysis configuration.
//!
//! ```toml
//! [data]
//! csv = "card.csv"          # or: covariance = "cov.csv" with n = 3010
//!
//! [roles]
//! outcome = "lwage"
//! treatment = "educ"
//! instrument = "nearc4"
//! xdot = ["black", "south"]
//! xtilde = ["exper", "expersq", "smsa"]
//!
//! [[bounds]]
//! kind = "comp_ud"
//! compare = ["black"]
//! b = 1.0
//!
//! [grid]
//! n_a = 200
//!
//! [bootstrap]
//! n_boot = 1000
//! level = 0.9
//! methods = ["bca"]
//! seed = 1
//! ```

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bootstrap::Method;
use crate::error::{Error, Result};
use crate::gridopt::GridParams;
use crate::r2calc::Roles;
use crate::sensmodel::{SensitivityBound, SensitivityModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub data: DataConfig,
    pub roles: RoleConfig,
    #[serde(default)]
    pub bounds: Vec<BoundConfig>,
    #[serde(default)]
    pub grid: GridParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<PathBuf>,
    /// Sample size; required with a covariance file, checked against a CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleConfig {
    pub outcome: String,
    pub treatment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instrument: Option<String>,
    #[serde(default)]
    pub xdot: Vec<String>,
    #[serde(default)]
    pub xtilde: Vec<String>,
}

impl RoleConfig {
    /// Variables in analysis order: outcome, treatment, instrument, `Ẋ`, `X̃`.
    pub fn columns(&self) -> Vec<String> {
        let mut v = vec![self.outcome.clone(), self.treatment.clone()];
        v.extend(self.instrument.clone());
        v.extend(self.xdot.iter().cloned());
        v.extend(self.xtilde.iter().cloned());
        v
    }

    /// Role indices into [`RoleConfig::columns`].
    pub fn roles(&self) -> Result<Roles> {
        let cols = self.columns();
        for (k, c) in cols.iter().enumerate() {
            if cols[..k].contains(c) {
                return Err(Error::RoleMismatch(format!("variable `{c}` has more than one role")));
            }
        }
        let z_off = usize::from(self.instrument.is_some());
        let xd0 = 2 + z_off;
        let xt0 = xd0 + self.xdot.len();
        Ok(Roles {
            y: 0,
            d: 1,
            z: self.instrument.as_ref().map(|_| 2),
            xdot: (xd0..xt0).collect(),
            xtilde: (xt0..xt0 + self.xtilde.len()).collect(),
        })
    }

    fn xdot_index(&self, name: &str) -> Result<usize> {
        let z_off = usize::from(self.instrument.is_some());
        self.xdot
            .iter()
            .position(|x| x == name)
            .map(|p| 2 + z_off + p)
            .ok_or_else(|| Error::RoleMismatch(format!("`{name}` is not listed in roles.xdot")))
    }
}

/// One sensitivity bound. Which fields apply depends on `kind`:
///
/// * `direct_ud`, `direct_uy`, `direct_uz`, `direct_zy`: `lo`, `hi`;
/// * `comp_ud`, `comp_uy`, `comp_uy_cond_d`: `compare`, optional `given`, `b`;
/// * `comp_uz`, `comp_zy`: `covariate`, `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compare: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub given: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

impl BoundConfig {
    pub fn resolve(&self, roles: &RoleConfig) -> Result<SensitivityBound> {
        let kind = self.kind.as_str();
        let family = match kind {
            "direct_ud" | "direct_uy" | "direct_uz" | "direct_zy" => 0,
            "comp_ud" | "comp_uy" | "comp_uy_cond_d" => 1,
            "comp_uz" | "comp_zy" => 2,
            _ => return Err(Error::Config(format!("unknown bound kind `{kind}`"))),
        };
        let stray = |name: &str, set: bool| {
            if set {
                Err(Error::Config(format!("field `{name}` does not apply to `{kind}`")))
            } else {
                Ok(())
            }
        };
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| Error::Config(format!("`{kind}` requires field `{name}`")))
        };
        stray("lo", family != 0 && self.lo.is_some())?;
        stray("hi", family != 0 && self.hi.is_some())?;
        stray("b", family == 0 && self.b.is_some())?;
        stray("compare", family != 1 && !self.compare.is_empty())?;
        stray("given", family != 1 && !self.given.is_empty())?;
        stray("covariate", family != 2 && self.covariate.is_some())?;
        let names = |v: &[String]| v.iter().map(|n| roles.xdot_index(n)).collect::<Result<Vec<_>>>();
        Ok(match family {
            0 => {
                let (lo, hi) = (need("lo", self.lo)?, need("hi", self.hi)?);
                match kind {
                    "direct_ud" => SensitivityBound::DirectUD { lo, hi },
                    "direct_uy" => SensitivityBound::DirectUY { lo, hi },
                    "direct_uz" => SensitivityBound::DirectUZ { lo, hi },
                    _ => SensitivityBound::DirectZY { lo, hi },
                }
            }
            1 => {
                let b = need("b", self.b)?;
                let (given, compare) = (names(&self.given)?, names(&self.compare)?);
                match kind {
                    "comp_ud" => SensitivityBound::CompUD { given, compare, b },
                    "comp_uy" => SensitivityBound::CompUYUncondD { given, compare, b },
                    _ => SensitivityBound::CompUYCondD { given, compare, b },
                }
            }
            _ => {
                let b = need("b", self.b)?;
                let name = self
                    .covariate
                    .as_deref()
                    .ok_or_else(|| Error::Config(format!("`{kind}` requires field `covariate`")))?;
                let j = roles.xdot_index(name)?;
                if kind == "comp_uz" {
                    SensitivityBound::CompUZ { j, b }
                } else {
                    SensitivityBound::CompZY { j, b }
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "default_n_boot")]
    pub n_boot: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub seed: u64,
}

fn default_n_boot() -> usize {
    1000
}

fn default_level() -> f64 {
    0.95
}

fn default_methods() -> Vec<Method> {
    vec![Method::Percentile]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl AnalysisConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: AnalysisConfig = toml::from_str(s).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        match (&self.data.csv, &self.data.covariance) {
            (Some(_), Some(_)) => return Err(Error::Config("give either data.csv or data.covariance, not both".into())),
            (None, None) => return Err(Error::Config("data.csv or data.covariance is required".into())),
            (None, Some(_)) if self.data.n.is_none() => {
                return Err(Error::Config("data.n is required with a covariance file".into()))
            }
            _ => {}
        }
        if self.bounds.is_empty() {
            return Err(Error::EmptyModel);
        }
        self.grid.validate()?;
        if let Some(b) = &self.bootstrap {
            if b.n_boot < 1 {
                return Err(Error::Config("bootstrap.n_boot must be at least 1".into()));
            }
            if !(b.level > 0.0 && b.level < 1.0) {
                return Err(Error::Config(format!("bootstrap.level must lie in (0, 1), got {}", b.level)));
            }
            if b.methods.is_empty() {
                return Err(Error::Config("bootstrap.methods must not be empty".into()));
            }
            if b.methods.contains(&Method::Oracle) {
                return Err(Error::Config("the oracle interval needs the confounder and is only available in simulations".into()));
            }
            if self.data.csv.is_none() && b.methods.iter().any(|m| m.is_bootstrap()) {
                return Err(Error::Config("resampling methods need row data (data.csv)".into()));
            }
        }
        self.roles.roles()?;
        self.sensitivity_model()?;
        Ok(())
    }

    /// Bounds with variable names resolved to [`RoleConfig::columns`] indices.
    pub fn sensitivity_model(&self) -> Result<SensitivityModel> {
        let bounds = self.bounds.iter().map(|b| b.resolve(&self.roles)).collect::<Result<_>>()?;
        Ok(SensitivityModel::new(bounds))
    }
}
