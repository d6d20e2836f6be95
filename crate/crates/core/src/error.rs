use thiserror::Error;

pub type Result<T> = std::result::Result<T, TvVarError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TvVarError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("degenerate kernel window at tau={tau:.6} (h={h:.6})")]
    DegenerateWindow { tau: f64, h: f64 },

    #[error("singular local design at tau={tau:.6} (reciprocal condition {rcond:.3e})")]
    SingularDesign { tau: f64, rcond: f64 },

    #[error("I - sum A_i is singular at tau={tau:.6} (reciprocal condition {rcond:.3e})")]
    SingularLongRunMatrix { tau: f64, rcond: f64 },

    #[error("weight matrix singular at {skipped} of {total} grid points")]
    SingularWeight { skipped: usize, total: usize },

    #[error("grid point tau={tau:.6} is unstable (spectral radius {radius:.4})")]
    UnstablePoint { tau: f64, radius: f64 },

    #[error("data generating process is unstable at tau={tau:.4} (spectral radius {radius:.4})")]
    UnstableDgp { tau: f64, radius: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}, column {column}: {reason}")]
    Parse {
        line: usize,
        column: usize,
        reason: String,
    },

    #[error("sample too short: T={t}, need at least {minimum}")]
    TooShort { t: usize, minimum: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl TvVarError {
    /// Input or configuration problem, as opposed to a numerical failure.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            TvVarError::Parse { .. }
                | TvVarError::TooShort { .. }
                | TvVarError::Config(_)
                | TvVarError::Io(_)
                | TvVarError::NonFinite { .. }
        )
    }
}

impl From<std::io::Error> for TvVarError {
    fn from(e: std::io::Error) -> Self {
        TvVarError::Io(e.to_string())
    }
}
