use thiserror::Error;

/// Errors raised by the factorization library.
#[derive(Debug, Error)]
pub enum SqmfError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("rank deficiency: selection stopped at step {step} of {requested} ({reason})")]
    RankDeficient {
        step: usize,
        requested: usize,
        reason: String,
    },

    #[error("singular system in {context} (pivot ratio {ratio:.3e})")]
    Singular { context: &'static str, ratio: f64 },

    #[error("source column {index} has zero norm")]
    ZeroSource { index: usize },

    #[error("all {restarts} restarts failed ({failures} failures)")]
    ConvergenceFailure { restarts: usize, failures: usize },

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("split scheme error at parent row {row}: {reason}")]
    Scheme { row: usize, reason: String },

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SqmfError {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        SqmfError::Dimension {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// True for failures that come from the numerics (rank, singularity,
    /// vanishing sources, non-convergence) rather than from bad input or I/O.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            SqmfError::RankDeficient { .. }
                | SqmfError::Singular { .. }
                | SqmfError::ZeroSource { .. }
                | SqmfError::ConvergenceFailure { .. }
                | SqmfError::Generation(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SqmfError>;
