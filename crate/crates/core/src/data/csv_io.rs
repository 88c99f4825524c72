use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Mapping from dataset roles to CSV column names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub outcome: String,
    pub state: String,
    pub time: String,
    pub covariates: Vec<String>,
}

impl ColumnSchema {
    pub fn new(
        outcome: impl Into<String>,
        state: impl Into<String>,
        time: impl Into<String>,
        covariates: Vec<String>,
    ) -> Self {
        ColumnSchema {
            outcome: outcome.into(),
            state: state.into(),
            time: time.into(),
            covariates,
        }
    }

    /// `y, s, t, x1..xd`.
    pub fn default_for(d: usize) -> Self {
        ColumnSchema::new("y", "s", "t", (1..=d).map(|j| format!("x{j}")).collect())
    }
}

/// Keep only rows where `column == value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub column: String,
    pub value: f64,
}

impl std::str::FromStr for Filter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (column, value) = s
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("filter `{s}` is not of the form col=value")))?;
        let value = value
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Usage(format!("filter value `{value}` is not numeric")))?;
        Ok(Filter { column: column.trim().to_string(), value })
    }
}

/// Header names of a CSV file.
pub fn csv_headers(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, column: "<header>".into(), message: e.to_string() })?;
    Ok(headers.iter().map(str::to_string).collect())
}

pub fn load_csv(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Dataset> {
    load_csv_filtered(path, schema, &[])
}

pub fn load_csv_filtered(
    path: impl AsRef<Path>,
    schema: &ColumnSchema,
    filters: &[Filter],
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, schema, filters)
}

/// Parses a headed CSV. Rows are numbered from 1, not counting the header.
pub fn read_csv<R: Read>(reader: R, schema: &ColumnSchema, filters: &[Filter]) -> Result<Dataset> {
    if schema.covariates.is_empty() {
        return Err(Error::Usage("schema must name at least one covariate column".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, column: "<header>".into(), message: e.to_string() })?
        .clone();
    let locate = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_col = locate(&schema.outcome)?;
    let s_col = locate(&schema.state)?;
    let t_col = locate(&schema.time)?;
    let x_cols = schema.covariates.iter().map(|c| locate(c)).collect::<Result<Vec<_>>>()?;
    let filter_cols = filters.iter().map(|f| locate(&f.column)).collect::<Result<Vec<_>>>()?;

    let d = x_cols.len();
    let (mut xs, mut s, mut t, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: "<record>".into(),
            message: e.to_string(),
        })?;
        let cell = |col: usize| -> Result<f64> {
            let name = &headers[col];
            let raw = record.get(col).ok_or_else(|| Error::Parse {
                row,
                column: name.to_string(),
                message: "missing field".into(),
            })?;
            if raw.is_empty() {
                return Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    message: "missing value".into(),
                });
            }
            raw.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("`{raw}` is not a number"),
            })
        };
        let binary = |col: usize| -> Result<bool> {
            let v = cell(col)?;
            match v {
                v if v == 0.0 => Ok(false),
                v if v == 1.0 => Ok(true),
                _ => Err(Error::Parse {
                    row,
                    column: headers[col].to_string(),
                    message: format!("expected 0 or 1, found {v}"),
                }),
            }
        };
        let mut keep = true;
        for (f, &col) in filters.iter().zip(&filter_cols) {
            if cell(col)? != f.value {
                keep = false;
            }
        }
        if !keep {
            continue;
        }
        y.push(cell(y_col)?);
        s.push(binary(s_col)?);
        t.push(binary(t_col)?);
        for &c in &x_cols {
            xs.push(cell(c)?);
        }
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, d, &xs);
    Dataset::with_schema(x, s, t, y, schema.clone())
}

/// Writes the dataset in the layout `read_csv` expects: outcome, state,
/// time, covariates. Reals use the shortest representation that parses back
/// to the same bits.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let schema = data.schema();
    let mut wtr = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Validation(format!("csv write failed: {e}"));
    let mut header = vec![schema.outcome.clone(), schema.state.clone(), schema.time.clone()];
    header.extend(schema.covariates.iter().cloned());
    wtr.write_record(&header).map_err(to_err)?;
    for i in 0..data.n() {
        let mut rec = vec![
            format!("{}", data.y()[i]),
            (data.s()[i] as u8).to_string(),
            (data.t()[i] as u8).to_string(),
        ];
        rec.extend((0..data.d()).map(|j| format!("{}", data.x()[(i, j)])));
        wtr.write_record(&rec).map_err(to_err)?;
    }
    wtr.flush().map_err(|source| Error::Io { path: "<writer>".into(), source })?;
    Ok(())
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_csv(data, file)
}
