//! Observations `(X, S, T, Y)`, fold management and CSV ingestion.

mod csv_io;
mod folds;

pub use csv_io::{csv_headers, load_csv, load_csv_filtered, read_csv, save_csv, write_csv, ColumnSchema, Filter};
pub use folds::{make_folds, FoldAssignment};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum sample size accepted by the estimators.
pub const MIN_OBSERVATIONS: usize = 8;

/// One of the four `(state, time)` cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub s: bool,
    pub t: bool,
}

impl Cell {
    /// Cells in index order: (0,0), (0,1), (1,0), (1,1).
    pub const ALL: [Cell; 4] = [
        Cell { s: false, t: false },
        Cell { s: false, t: true },
        Cell { s: true, t: false },
        Cell { s: true, t: true },
    ];

    pub fn new(s: bool, t: bool) -> Self {
        Cell { s, t }
    }

    /// Index `2·s + t`.
    pub fn index(self) -> usize {
        2 * self.s as usize + self.t as usize
    }

    pub fn from_index(i: usize) -> Self {
        Cell::ALL[i]
    }

    /// Sign of the cell in the double difference: + for (1,1) and (0,0).
    pub fn sign(self) -> f64 {
        if self.s == self.t {
            1.0
        } else {
            -1.0
        }
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(s={}, t={})", self.s as u8, self.t as u8)
    }
}

/// A repeated cross-section of `n` observations with `d` covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    s: Vec<bool>,
    t: Vec<bool>,
    y: Vec<f64>,
    schema: ColumnSchema,
}

impl Dataset {
    /// Builds a dataset with default column names `y, s, t, x1..xd`.
    pub fn new(x: DMatrix<f64>, s: Vec<bool>, t: Vec<bool>, y: Vec<f64>) -> Result<Self> {
        let schema = ColumnSchema::default_for(x.ncols());
        Self::with_schema(x, s, t, y, schema)
    }

    pub fn with_schema(
        x: DMatrix<f64>,
        s: Vec<bool>,
        t: Vec<bool>,
        y: Vec<f64>,
        schema: ColumnSchema,
    ) -> Result<Self> {
        let n = y.len();
        for len in [x.nrows(), s.len(), t.len()] {
            if len != n {
                return Err(Error::Shape { expected: n, got: len });
            }
        }
        if schema.covariates.len() != x.ncols() {
            return Err(Error::Shape {
                expected: x.ncols(),
                got: schema.covariates.len(),
            });
        }
        if x.ncols() == 0 {
            return Err(Error::Validation("at least one covariate is required".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite outcome at row {}", i + 1)));
        }
        for (idx, v) in x.iter().enumerate() {
            if !v.is_finite() {
                let (row, col) = (idx % n.max(1), idx / n.max(1));
                return Err(Error::Validation(format!(
                    "non-finite covariate `{}` at row {}",
                    schema.covariates[col],
                    row + 1
                )));
            }
        }
        Ok(Dataset { x, s, t, y, schema })
    }

    /// Checks the estimation preconditions: `n ≥ 8` and all four cells nonempty.
    pub fn validate(&self) -> Result<()> {
        if self.n() < MIN_OBSERVATIONS {
            return Err(Error::Validation(format!(
                "need at least {MIN_OBSERVATIONS} observations, got {}",
                self.n()
            )));
        }
        let counts = self.cell_counts();
        for cell in Cell::ALL {
            if counts[cell.index()] == 0 {
                return Err(Error::Overlap(format!("no observations in cell {cell}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn s(&self) -> &[bool] {
        &self.s
    }

    pub fn t(&self) -> &[bool] {
        &self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn schema(&self) -> &ColumnSchema {
        &self.schema
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn cell(&self, i: usize) -> Cell {
        Cell::new(self.s[i], self.t[i])
    }

    pub fn cells(&self) -> Vec<Cell> {
        (0..self.n()).map(|i| self.cell(i)).collect()
    }

    pub fn cell_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for i in 0..self.n() {
            counts[self.cell(i).index()] += 1;
        }
        counts
    }

    /// Rows `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(indices.len(), self.d(), |r, c| self.x[(indices[r], c)]);
        Dataset {
            x,
            s: indices.iter().map(|&i| self.s[i]).collect(),
            t: indices.iter().map(|&i| self.t[i]).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            schema: self.schema.clone(),
        }
    }

    /// Same covariates and cells with a replaced outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::with_schema(
            self.x.clone(),
            self.s.clone(),
            self.t.clone(),
            y,
            self.schema.clone(),
        )
    }
}
