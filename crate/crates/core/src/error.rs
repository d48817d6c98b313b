use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate basis: vector {index} makes the Gram condition number {condition:e} (limit 1e12)")]
    DegenerateBasis { index: usize, condition: f64 },

    #[error("angle degeneracy: vector {index} has angle {angle:.3e} rad to the current span (minimum {min_angle:.3e})")]
    AngleDegeneracy {
        index: usize,
        angle: f64,
        min_angle: f64,
    },

    #[error("1 + (g-1)P is not invertible: margin {margin:.3e}")]
    Inducibility { margin: f64 },

    #[error("conditioning impossible: normalization constant {normalization:.3e} vanishes")]
    ConditioningImpossible { normalization: f64 },

    #[error("ground space has {n} points; brute-force enumeration supports at most {max}")]
    Size { n: usize, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that signal a violated numerical contract (as opposed
    /// to malformed input or I/O trouble).
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::Json(_) | Error::Format(_) | Error::Argument(_)
        )
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
