//! Configuration and data loading for the subcommands.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sensopt::config::AnalysisConfig;
use sensopt::data::{covariance_from_csv, Dataset};
use sensopt::r2calc::Covariance;
use sensopt::Error;

/// Reads a TOML config, or the `config` field of a JSON result document.
///
/// Relative paths are resolved against the directory holding the file.
pub fn load_config(path: &Path) -> Result<AnalysisConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    let mut cfg = if is_json {
        let doc: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let inner = doc
            .get("config")
            .ok_or_else(|| anyhow!("{} has no `config` field", path.display()))?;
        let cfg: AnalysisConfig = serde_json::from_value(inner.clone())
            .with_context(|| format!("reading the config stored in {}", path.display()))?;
        cfg.validate()?;
        cfg
    } else {
        AnalysisConfig::from_toml_str(&text).with_context(|| format!("in {}", path.display()))?
    };
    let base = std::path::absolute(path)?
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let fix = |p: &mut Option<PathBuf>| -> Result<()> {
        if let Some(p) = p.as_mut() {
            *p = std::path::absolute(base.join(&*p))?;
        }
        Ok(())
    };
    fix(&mut cfg.data.csv)?;
    fix(&mut cfg.data.covariance)?;
    fix(&mut cfg.output.path)?;
    Ok(cfg)
}

/// The data behind an analysis, ordered as [`sensopt::config::RoleConfig::columns`].
pub struct Loaded {
    pub rows: Option<Dataset>,
    pub cov: Covariance,
    pub n: usize,
}

pub fn load_data(cfg: &AnalysisConfig) -> Result<Loaded> {
    let columns = cfg.roles.columns();
    if let Some(path) = &cfg.data.csv {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let rows = Dataset::from_csv(file, Some(&columns)).with_context(|| format!("reading {}", path.display()))?;
        let n = rows.n_rows();
        if let Some(want) = cfg.data.n {
            if want != n {
                bail!("data.n = {want} but {} has {n} rows", path.display());
            }
        }
        let cov = rows.covariance()?;
        return Ok(Loaded { rows: Some(rows), cov, n });
    }
    let path = cfg.data.covariance.as_ref().expect("validated config names a data source");
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let full = covariance_from_csv(file).with_context(|| format!("reading {}", path.display()))?;
    let idx = columns
        .iter()
        .map(|c| full.index(c).ok_or_else(|| Error::MissingColumn(c.clone())))
        .collect::<sensopt::Result<Vec<_>>>()?;
    let n = cfg.data.n.expect("validated config has n with a covariance file");
    Ok(Loaded { rows: None, cov: full.subset(&idx), n })
}

/// Writes `text` to `path`, or to standard output without one.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
