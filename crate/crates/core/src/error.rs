use thiserror::Error;

/// Which side of the soft partition lost all of its weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Inside,
    Outside,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Region::Inside => f.write_str("inside"),
            Region::Outside => f.write_str("outside"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid must have at least one row, column and channel (got {height}x{width}x{channels})")]
    EmptyGrid {
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error("grid buffer length {actual} does not match shape (expected {expected})")]
    BufferLength { expected: usize, actual: usize },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("mask value at flat index {0} outside [0, 1]")]
    OutOfUnitRange(usize),
    #[error("invalid box [{x0},{x1})x[{y0},{y1}) for a {width}x{height} plane")]
    InvalidBox {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        width: usize,
        height: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate region: {0} weight collapsed below 1e-12")]
    DegenerateRegion(Region),
    #[error("class label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("metrics undefined for an empty ground-truth set")]
    EmptyGroundTruth,
}

pub type Result<T> = std::result::Result<T, Error>;
