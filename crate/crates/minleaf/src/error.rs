use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. Variants carry enough location detail (row, column,
/// line, leaf) for a caller to report the problem without re-parsing anything.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("label column {0:?} not found in header")]
    LabelColumnNotFound(String),

    #[error("missing value at row {row}, column {column:?}")]
    MissingValue { row: usize, column: String },

    #[error("non-numeric value {value:?} at row {row} in numeric column {column:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("label column has a single class {class:?}; need at least two")]
    SingleClass { class: String },

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("{0}")]
    InvalidDataset(String),

    #[error("cannot split {n} samples into a non-empty train and test set")]
    SplitTooSmall { n: usize },

    #[error("minimum leaf size {n_min} exceeds sample count {n}")]
    MinLeafTooLarge { n_min: usize, n: usize },

    #[error("tree depth {tree_depth} exceeds model depth {model_depth}")]
    DepthExceeded {
        tree_depth: usize,
        model_depth: usize,
    },

    #[error("leaf {leaf} holds {count} training samples, below the minimum {n_min}")]
    LeafBelowMinSize {
        leaf: usize,
        count: usize,
        n_min: usize,
    },

    #[error("branch node {node} splits feature {feature} at {threshold} but no feasible model threshold exists for the routed samples")]
    ThresholdNotRepresentable {
        node: usize,
        feature: usize,
        threshold: f64,
    },

    #[error("assignment is missing a value for variable {0:?}")]
    MissingVariable(String),

    #[error("line {line}: {message}")]
    SolutionFormat { line: usize, message: String },

    #[error("lp parse error at line {line}: {message}")]
    LpParse { line: usize, message: String },

    #[error("search space of {count} candidate trees exceeds the enumeration cap {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("{0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
