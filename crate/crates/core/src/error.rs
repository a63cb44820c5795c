//! Error type shared by all modules of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch, lhs is {lhs_rows}x{lhs_cols}, rhs is {rhs_rows}x{rhs_cols}")]
    ShapeMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },

    #[error("{op}: empty dimension ({rows}x{cols})")]
    EmptyDimension { op: &'static str, rows: usize, cols: usize },

    /// Precondition violation that is not a shape problem (odd row counts,
    /// out-of-range arguments, row-misaligned companions, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("log of non-positive value {value} at flat index {index}")]
    NonPositiveLog { value: f64, index: usize },

    #[error("degenerate embedding: row {row} has norm {norm:e} (below 1e-12)")]
    DegenerateEmbedding { row: usize, norm: f64 },

    #[error("backward requires a 1x1 objective, got {rows}x{cols}")]
    NonScalarObjective { rows: usize, cols: usize },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("numeric abort at iteration {iteration}: {message}")]
    NumericAbort { iteration: usize, message: String },

    #[error("need at least {required} samples, got {actual}")]
    InsufficientSamples { required: usize, actual: usize },

    #[error("class {class} missing or underpopulated in {which} samples (needs >= {required})")]
    MissingClass {
        class: usize,
        which: &'static str,
        required: usize,
    },

    #[error("{path} line {line}: {message}")]
    MalformedFile {
        path: String,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
