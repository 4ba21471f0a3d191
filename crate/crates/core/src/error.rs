use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("potential: {0}")]
    Potential(String),
    #[error("patch construction: {0}")]
    Patch(String),
    #[error("mode {0:?} is not in the mode set")]
    UnknownMode([i64; 3]),
    #[error("space too large: {what} would need {size} states (limit {limit})")]
    TooLarge { what: String, size: u128, limit: u128 },
    #[error("operator is not {kind}: defect {defect:e}")]
    NotCertified { kind: &'static str, defect: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("krylov propagation did not converge (achieved local error {achieved:e}, requested {requested:e})")]
    KrylovNonConvergence { achieved: f64, requested: f64 },
    #[error("unrepresentable hop from occupied mode {from:?} by {by:?}")]
    UnrepresentableHop { from: [i64; 3], by: [i64; 3] },
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
