use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("lag {lag} out of range for a grid of {points} points")]
    LagOutOfRange { lag: i64, points: usize },

    #[error("grid of {points} points is too coarse, need at least {needed}")]
    GridTooCoarse { points: usize, needed: usize },

    /// A point left the open feasibility cone (p ≤ 0 or Q not positive
    /// definite at some grid frequency).
    #[error("point outside the feasible cone: {0}")]
    Infeasible(String),

    #[error("matrix not positive definite at grid index {index}")]
    NotPositiveDefinite { index: usize },

    #[error("moment has non-negligible imaginary part {value:e}")]
    ImaginaryResidue { value: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("line search failed at iteration {iteration}: {reason}")]
    LineSearch { iteration: usize, reason: String },

    #[error("malformed CSV at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the data or configuration rather than by
    /// the numerics. Used by the CLI to pick an exit code.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::LengthMismatch { .. }
                | Error::DimensionMismatch(_)
                | Error::GridTooCoarse { .. }
                | Error::InvalidInput(_)
                | Error::Csv { .. }
                | Error::Json(_)
                | Error::LagOutOfRange { .. }
        )
    }
}
