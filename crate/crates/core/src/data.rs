//! Tabular data ingestion and empirical covariance matrices.
//!
//! Covariances are computed from centred columns with `1/n` scaling. Resampled
//! covariances take integer row counts instead of materializing the resample.

use std::io::Read;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::r2calc::Covariance;

/// Column-major numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Config("column count does not match names".into()));
        }
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Config("columns differ in length".into()));
        }
        Ok(Self { names, columns })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    /// Keeps the listed columns in the listed order.
    pub fn select<S: AsRef<str>>(&self, wanted: &[S]) -> Result<Dataset> {
        let mut names = Vec::with_capacity(wanted.len());
        let mut columns = Vec::with_capacity(wanted.len());
        for w in wanted {
            let w = w.as_ref();
            let col = self.column(w).ok_or_else(|| Error::MissingColumn(w.to_string()))?;
            names.push(w.to_string());
            columns.push(col.to_vec());
        }
        Dataset::new(names, columns)
    }

    /// Reads a CSV with a header row. Only `wanted` columns are parsed when given.
    pub fn from_csv<R: Read>(reader: R, wanted: Option<&[String]>) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_error(e, 1))?
            .iter()
            .map(str::to_string)
            .collect();
        let picks: Vec<(usize, String)> = match wanted {
            Some(ws) => ws
                .iter()
                .map(|w| {
                    header
                        .iter()
                        .position(|h| h == w)
                        .map(|i| (i, w.clone()))
                        .ok_or_else(|| Error::MissingColumn(w.clone()))
                })
                .collect::<Result<_>>()?,
            None => header.iter().cloned().enumerate().collect(),
        };
        for (k, (_, name)) in picks.iter().enumerate() {
            if picks[..k].iter().any(|(_, n)| n == name) {
                return Err(Error::Config(format!("duplicate column `{name}`")));
            }
        }
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); picks.len()];
        let mut numeric_seen = vec![false; picks.len()];
        let mut first_bad: Vec<Option<(usize, usize, String)>> = vec![None; picks.len()];
        for (r, rec) in rdr.records().enumerate() {
            let row = r + 2;
            let rec = rec.map_err(|e| csv_error(e, row))?;
            if rec.len() != header.len() {
                return Err(Error::Parse {
                    row,
                    col: rec.len().min(header.len()) + 1,
                    msg: format!("expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            for (k, (ci, _)) in picks.iter().enumerate() {
                let cell = &rec[*ci];
                if cell.is_empty() {
                    return Err(Error::Parse { row, col: ci + 1, msg: "missing value".into() });
                }
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => {
                        numeric_seen[k] = true;
                        columns[k].push(v);
                    }
                    _ => {
                        if first_bad[k].is_none() {
                            first_bad[k] = Some((row, ci + 1, cell.to_string()));
                        }
                        columns[k].push(f64::NAN);
                    }
                }
            }
        }
        for (k, (_, name)) in picks.iter().enumerate() {
            if let Some((row, col, cell)) = first_bad[k].take() {
                if !numeric_seen[k] {
                    return Err(Error::NonNumericColumn(name.clone()));
                }
                return Err(Error::Parse { row, col, msg: format!("not a finite number: `{cell}`") });
            }
        }
        let names = picks.into_iter().map(|(_, n)| n).collect();
        Dataset::new(names, columns)
    }

    /// Centred covariance with `1/n` scaling.
    pub fn covariance(&self) -> Result<Covariance> {
        let n = self.n_rows();
        if n < 2 {
            return Err(Error::PreconditionViolated("at least two rows are required".into()));
        }
        Covariance::new(self.names.clone(), self.raw_covariance(None))
    }

    /// Covariance of the sample in which row `i` appears `counts[i]` times.
    pub fn weighted_covariance(&self, counts: &[u32]) -> Result<Covariance> {
        if counts.len() != self.n_rows() {
            return Err(Error::PreconditionViolated("one count per row is required".into()));
        }
        Covariance::new(self.names.clone(), self.raw_covariance(Some(counts)))
    }

    fn raw_covariance(&self, counts: Option<&[u32]>) -> DMatrix<f64> {
        let p = self.columns.len();
        let n = self.n_rows();
        let w = |i: usize| counts.map_or(1.0, |c| c[i] as f64);
        let total: f64 = (0..n).map(w).sum();
        let means: Vec<f64> = self
            .columns
            .iter()
            .map(|c| c.iter().enumerate().map(|(i, v)| w(i) * v).sum::<f64>() / total)
            .collect();
        let mut s = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let wi = w(i);
            if wi == 0.0 {
                continue;
            }
            for a in 0..p {
                let da = self.columns[a][i] - means[a];
                for b in 0..=a {
                    s[(a, b)] += wi * da * (self.columns[b][i] - means[b]);
                }
            }
        }
        for a in 0..p {
            for b in 0..=a {
                let v = s[(a, b)] / total;
                s[(a, b)] = v;
                s[(b, a)] = v;
            }
        }
        s
    }
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    let (row, col) = match e.position() {
        Some(p) => (p.line() as usize, 0),
        None => (row, 0),
    };
    Error::Parse { row, col, msg: e.to_string() }
}

/// Reads a covariance matrix stored as CSV: a header of variable names
/// followed by one row per variable.
pub fn covariance_from_csv<R: Read>(reader: R) -> Result<Covariance> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_string)
        .collect();
    let p = names.len();
    let mut vals = Vec::with_capacity(p * p);
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 2;
        let rec = rec.map_err(|e| csv_error(e, row))?;
        if rec.len() != p {
            return Err(Error::Parse {
                row,
                col: rec.len().min(p) + 1,
                msg: format!("expected {p} fields, found {}", rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                col: c + 1,
                msg: format!("not a number: `{cell}`"),
            })?;
            vals.push(v);
        }
        rows += 1;
    }
    if rows != p {
        return Err(Error::InvalidCovariance(format!("{p} names but {rows} rows")));
    }
    Covariance::new(names, DMatrix::from_row_slice(p, p, &vals))
}

/// Writes a covariance matrix in the format read by [`covariance_from_csv`].
pub fn covariance_to_csv(cov: &Covariance) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(cov.names()).expect("writing to memory");
    for i in 0..cov.dim() {
        w.write_record((0..cov.dim()).map(|j| format!("{:e}", cov.sigma()[(i, j)])))
            .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("names are UTF-8")
}
