use thiserror::Error;

/// Errors raised by the library.
///
/// Variants split into input errors (bad parameters, malformed files) and
/// numerical-stability errors; see [`Error::is_numerical`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input `{key}`: {reason}")]
    InvalidInput { key: String, reason: String },

    #[error("grid too narrow: captured norm {captured:.6e} is below {required:.6e}")]
    GridTooNarrow { captured: f64, required: f64 },

    #[error("shift {shift} leaves the grid margin (|X| must not exceed {max_shift:.4})")]
    OutOfSupport { shift: f64, max_shift: f64 },

    #[error("ill-conditioned Gram matrix (condition {condition:.3e} > {limit:.1e}); max order too high for this grid")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("finite-difference result unstable: relative change {change:.3e} exceeds {limit:.1e} when the step halves")]
    StepInstability { change: f64, limit: f64 },

    #[error("Helstrom information unstable under truncation {from} -> {to}: relative change {change:.3e}")]
    TruncationInstability { from: usize, to: usize, change: f64 },

    #[error("singular information equation: null eigenpair ({i}, {j}) carries derivative component {component:.3e}")]
    SingularEquation { i: usize, j: usize, component: f64 },

    #[error("point-spread function is not even (max asymmetry {asymmetry:.3e})")]
    PsfNotEven { asymmetry: f64 },

    #[error("degenerate basis: constant c_{index} vanishes")]
    ZeroConstant { index: usize },

    #[error("mode basis of kind `{found}` cannot be used here (expected `{expected}`)")]
    WrongBasisKind { found: String, expected: String },

    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics (conditioning, step or truncation
    /// instability, singular equations) as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned { .. }
                | Error::StepInstability { .. }
                | Error::TruncationInstability { .. }
                | Error::SingularEquation { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
