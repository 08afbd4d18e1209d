use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("combinatorial guard exceeded: C({n}, {m}) = {count} > {limit}")]
    CombinatorialGuard {
        n: usize,
        m: usize,
        count: u128,
        limit: u128,
    },

    #[error("every ladder guess failed")]
    SweepFailure,

    #[error("no sampling round met the coverage quota (guess too small)")]
    GuessTooSmall,

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
