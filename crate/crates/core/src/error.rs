//! Error type shared across the crate.

use thiserror::Error;

/// Why a parameter vector (or a transformed-probability vector) is outside
/// the feasible region at one covariate setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfeasibilityCause {
    /// The linear system mapping transformed probabilities back to category
    /// probabilities has no (numerically reliable) solution.
    SingularD,
    /// A coordinate of `D⁻¹b` is zero or negative, which would produce a
    /// category probability outside `(0, 1)`.
    NonPositive { coordinate: usize },
}

impl std::fmt::Display for InfeasibilityCause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InfeasibilityCause::SingularD => write!(f, "singular D matrix"),
            InfeasibilityCause::NonPositive { coordinate } => {
                write!(f, "non-positive coordinate {} of D^-1 b", coordinate + 1)
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Parameters fall outside the feasible region. `setting` is the
    /// zero-based index of the first violating covariate setting when known.
    #[error("infeasible parameters{}: {cause}", setting.map(|i| format!(" at setting {}", i + 1)).unwrap_or_default())]
    Infeasible {
        setting: Option<usize>,
        cause: InfeasibilityCause,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("no feasible starting point: {0}")]
    NoFeasibleStart(String),

    #[error("search space too large: {0}")]
    SearchTooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
