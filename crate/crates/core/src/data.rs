//! Observation data and CSV ingestion.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A response vector with per-observation covariates and optional grouping
/// and time structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub y: Vec<f64>,
    /// One row per observation.
    pub x: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
    pub group_id: Option<Vec<usize>>,
    pub time_index: Option<Vec<i64>>,
}

/// Which CSV columns play which role.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub response: String,
    pub covariates: Vec<String>,
    pub group: Option<String>,
    pub time: Option<String>,
}

impl Dataset {
    pub fn new(
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
        covariate_names: Vec<String>,
        group_id: Option<Vec<usize>>,
        time_index: Option<Vec<i64>>,
    ) -> Result<Self> {
        let ds = Dataset {
            y,
            x,
            covariate_names,
            group_id,
            time_index,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    /// Number of groups `J`, when grouping is present.
    pub fn n_groups(&self) -> Option<usize> {
        self.group_id
            .as_ref()
            .map(|g| g.iter().copied().max().map_or(0, |m| m + 1))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n == 0 {
            return Err(Error::invalid("dataset has no observations"));
        }
        if self.x.len() != n {
            return Err(Error::invalid(format!(
                "covariate rows ({}) do not match observations ({n})",
                self.x.len()
            )));
        }
        let p = self.covariate_names.len();
        if let Some(i) = self.x.iter().position(|row| row.len() != p) {
            return Err(Error::invalid(format!(
                "observation {i} has {} covariates, expected {p}",
                self.x[i].len()
            )));
        }
        if let Some(g) = &self.group_id {
            if g.len() != n {
                return Err(Error::invalid("group_id length does not match y"));
            }
            let j = g.iter().copied().max().unwrap_or(0) + 1;
            let mut seen = vec![false; j];
            for &gi in g {
                seen[gi] = true;
            }
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(Error::invalid(format!(
                    "group ids must be contiguous 0..{}; group {missing} is empty",
                    j - 1
                )));
            }
        }
        if let Some(t) = &self.time_index {
            if t.len() != n {
                return Err(Error::invalid("time_index length does not match y"));
            }
        }
        Ok(())
    }

    /// A copy keeping only the named covariate columns, in the given order.
    pub fn select_covariates(&self, names: &[&str]) -> Result<Dataset> {
        let idx: Vec<usize> = names
            .iter()
            .map(|name| {
                self.covariate_names
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::invalid(format!("no covariate named {name}")))
            })
            .collect::<Result<_>>()?;
        Ok(Dataset {
            y: self.y.clone(),
            x: self
                .x
                .iter()
                .map(|row| idx.iter().map(|&i| row[i]).collect())
                .collect(),
            covariate_names: names.iter().map(|s| s.to_string()).collect(),
            group_id: self.group_id.clone(),
            time_index: self.time_index.clone(),
        })
    }

    pub fn read_csv_path(path: impl AsRef<Path>, roles: &ColumnRoles) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, roles)
    }

    pub fn read_csv<R: Read>(reader: R, roles: &ColumnRoles) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| csv_err(1, "<header>", e.to_string()))?
            .clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| csv_err(1, name, "column not found in header".into()))
        };
        let y_col = col(&roles.response)?;
        let x_cols: Vec<usize> = roles
            .covariates
            .iter()
            .map(|c| col(c))
            .collect::<Result<_>>()?;
        let g_col = roles.group.as_deref().map(col).transpose()?;
        let t_col = roles.time.as_deref().map(col).transpose()?;

        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut groups = g_col.map(|_| Vec::new());
        let mut times = t_col.map(|_| Vec::new());
        for (i, record) in rdr.records().enumerate() {
            // header is line 1
            let row = i + 2;
            let record = record.map_err(|e| csv_err(row, "<record>", e.to_string()))?;
            let field = |c: usize| -> Result<&str> {
                record
                    .get(c)
                    .map(str::trim)
                    .ok_or_else(|| csv_err(row, &headers[c], "missing field".into()))
            };
            let real = |c: usize| -> Result<f64> {
                let s = field(c)?;
                let v: f64 = s
                    .parse()
                    .map_err(|_| csv_err(row, &headers[c], format!("not a number: {s:?}")))?;
                if !v.is_finite() {
                    return Err(csv_err(row, &headers[c], "non-finite value".into()));
                }
                Ok(v)
            };
            y.push(real(y_col)?);
            x.push(x_cols.iter().map(|&c| real(c)).collect::<Result<Vec<_>>>()?);
            if let (Some(c), Some(g)) = (g_col, groups.as_mut()) {
                let s = field(c)?;
                let v: usize = s.parse().map_err(|_| {
                    csv_err(row, &headers[c], format!("not a group index: {s:?}"))
                })?;
                g.push(v);
            }
            if let (Some(c), Some(t)) = (t_col, times.as_mut()) {
                let s = field(c)?;
                let v: i64 = s.parse().map_err(|_| {
                    csv_err(row, &headers[c], format!("not a time index: {s:?}"))
                })?;
                t.push(v);
            }
        }
        Dataset::new(y, x, roles.covariates.clone(), groups, times)
    }

    /// Writes the dataset with a header row: `y`, covariates, then `group`
    /// and `time` when present.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string()];
        header.extend(self.covariate_names.iter().cloned());
        if self.group_id.is_some() {
            header.push("group".into());
        }
        if self.time_index.is_some() {
            header.push("time".into());
        }
        w.write_record(&header).map_err(csv_write_err)?;
        for i in 0..self.len() {
            let mut rec = vec![fmt_f64(self.y[i])];
            rec.extend(self.x[i].iter().map(|v| fmt_f64(*v)));
            if let Some(g) = &self.group_id {
                rec.push(g[i].to_string());
            }
            if let Some(t) = &self.time_index {
                rec.push(t[i].to_string());
            }
            w.write_record(&rec).map_err(csv_write_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Roles matching the layout produced by [`Dataset::write_csv`].
    pub fn default_roles(&self) -> ColumnRoles {
        ColumnRoles {
            response: "y".into(),
            covariates: self.covariate_names.clone(),
            group: self.group_id.as_ref().map(|_| "group".into()),
            time: self.time_index.as_ref().map(|_| "time".into()),
        }
    }
}

/// Shortest representation that parses back to the same bits.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(row: usize, column: &str, message: String) -> Error {
    Error::Csv {
        row,
        column: column.to_string(),
        message,
    }
}

fn csv_write_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
