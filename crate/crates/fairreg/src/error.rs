//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by dataset handling, model construction, and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("column '{0}' not found in header")]
    MissingColumn(String),

    #[error("non-numeric cell at row {row}, column '{column}': '{value}'")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("sensitive column '{column}' has {distinct} distinct values, expected exactly 2")]
    SensitiveCardinality { column: String, distinct: usize },

    #[error("single sensitive group: every observation has a = {0}")]
    SingleGroup(u8),

    #[error("empty dataset: no data rows found")]
    EmptyData,

    #[error("classification target at row {row} is {value}, expected -1 or +1")]
    BadLabel { row: usize, value: f64 },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("split leaves a half with an empty sensitive group (fraction {fraction}, seed {seed})")]
    DegenerateSplit { fraction: f64, seed: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("logistic loss requires labels in {{-1, +1}}, got {0}")]
    InvalidLabel(f64),

    #[error("perspective weight z = {0} outside [0, 1]")]
    PerspectiveWeight(f64),

    #[error("breakpoints must be finite and strictly increasing")]
    BadBreakpoints,

    #[error("breakpoint transform is not strictly increasing on the given grid")]
    NonMonotoneTransform,

    #[error("big-M must be positive, got {0}")]
    NonPositiveBigM(f64),

    #[error("logistic loss requires a finite big-M for the strong formulation (p_0/p_ell complementarity is not implied by the epigraph)")]
    MissingLogisticBigM,

    #[error("LP export does not support this loss/kind combination: {0}")]
    UnsupportedExport(String),

    #[error("brute-force oracle only supports n <= 2, got n = {0}")]
    OracleDimension(usize),

    #[error("solver failed: {0}")]
    Solver(String),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
