use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("overlap violation: {0}")]
    Overlap(String),

    #[error("cannot stratify folds: cell {cell} has {count} observations but {k} folds were requested")]
    InfeasibleStratification { cell: String, count: usize, k: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("basis too large: {terms} terms exceeds the cap of {cap}")]
    Capacity { terms: usize, cap: usize },

    #[error("empty basis")]
    EmptyBasis,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("propensity fit did not converge after {iterations} iterations (gradient norm {grad_norm:.3e}, penalized loss {loss:.6e})")]
    Convergence {
        iterations: usize,
        grad_norm: f64,
        loss: f64,
    },

    #[error("ill-posed effect regression: {0}")]
    IllPosed(String),

    #[error("degenerate design: {0}")]
    Degenerate(String),

    #[error("poorly conditioned decomposition at observation {index}: f = {f:.3e} below f_min = {f_min:.3e}")]
    Conditioning { index: usize, f: f64, f_min: f64 },

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("QP solver did not converge in {iterations} iterations (last KKT residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    #[error("data-generating process invariant violated: {0}")]
    DgpInvariant(String),

    #[error("invalid argument: {0}")]
    Usage(String),
}

impl Clone for Error {
    fn clone(&self) -> Self {
        match self {
            Error::Io { path, source } => Error::Io {
                path: path.clone(),
                source: std::io::Error::new(source.kind(), source.to_string()),
            },
            Error::Parse { row, column, message } => Error::Parse {
                row: *row,
                column: column.clone(),
                message: message.clone(),
            },
            Error::MissingColumn(s) => Error::MissingColumn(s.clone()),
            Error::Validation(s) => Error::Validation(s.clone()),
            Error::Overlap(s) => Error::Overlap(s.clone()),
            Error::InfeasibleStratification { cell, count, k } => Error::InfeasibleStratification {
                cell: cell.clone(),
                count: *count,
                k: *k,
            },
            Error::Shape { expected, got } => Error::Shape { expected: *expected, got: *got },
            Error::Capacity { terms, cap } => Error::Capacity { terms: *terms, cap: *cap },
            Error::EmptyBasis => Error::EmptyBasis,
            Error::InsufficientData(s) => Error::InsufficientData(s.clone()),
            Error::Convergence { iterations, grad_norm, loss } => Error::Convergence {
                iterations: *iterations,
                grad_norm: *grad_norm,
                loss: *loss,
            },
            Error::IllPosed(s) => Error::IllPosed(s.clone()),
            Error::Degenerate(s) => Error::Degenerate(s.clone()),
            Error::Conditioning { index, f, f_min } => Error::Conditioning { index: *index, f: *f, f_min: *f_min },
            Error::RankDeficient(s) => Error::RankDeficient(s.clone()),
            Error::NonConvergence { iterations, residual, trace } => Error::NonConvergence {
                iterations: *iterations,
                residual: *residual,
                trace: trace.clone(),
            },
            Error::DgpInvariant(s) => Error::DgpInvariant(s.clone()),
            Error::Usage(s) => Error::Usage(s.clone()),
        }
    }
}

impl Error {
    /// True for errors caused by the input data rather than numerics or usage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::MissingColumn(_)
                | Error::Validation(_)
                | Error::Overlap(_)
                | Error::InfeasibleStratification { .. }
                | Error::Shape { .. }
                | Error::InsufficientData(_)
        )
    }

    pub fn is_usage_error(&self) -> bool {
        matches!(self, Error::Usage(_) | Error::Capacity { .. } | Error::EmptyBasis)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
