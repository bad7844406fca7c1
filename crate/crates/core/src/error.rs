use thiserror::Error;

use crate::domain::Cell;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected} features, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("improper marginals: empty cell(s) {}", fmt_cells(.empty))]
    ImproperMarginals { empty: Vec<Cell> },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("dual bracket exceeded |{multiplier}| <= 2^40 without locating the maximum")]
    BracketOverflow { multiplier: &'static str },

    #[error("most favorable distribution leaves residual gap {residual:.3e} for y={y} (tolerance {tolerance:.1e})")]
    ResidualGap { y: u8, residual: f64, tolerance: f64 },

    /// `row` counts data rows from 1; the header is row 0.
    #[error("{path}: row {row}: {message}")]
    Parse {
        path: String,
        row: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document {path}: {message}")]
    Format { path: String, message: String },
}

fn fmt_cells(cells: &[Cell]) -> String {
    cells
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
