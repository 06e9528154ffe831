use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("capacity exceeded: {what} = {requested} exceeds limit {limit}")]
    Capacity {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("degenerate filter: {0}")]
    DegenerateFilter(String),

    #[error("visibility undefined: sector k={0} has no surviving component")]
    UndefinedVisibility(usize),

    #[error("no optimum: objective is flat over the scanned range")]
    NoOptimum,

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
