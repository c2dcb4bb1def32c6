use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input domain: {0}")]
    InvalidDomain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("probability {0} is outside the open interval (0, 1)")]
    OutsideUnitInterval(f64),

    #[error("dimension {dim} exceeds the {max} supported Sobol' dimensions")]
    UnsupportedDimension { dim: usize, max: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sample variance needs at least 2 replications, found {0}")]
    TooFewReplications(usize),

    #[error("model failed at level {level}, point {point}, replication {replication}: {message}")]
    ModelFailure {
        level: usize,
        point: usize,
        replication: usize,
        message: String,
    },

    #[error(
        "auxiliary design with {aux} points is not a prefix of a level design with {level} points"
    )]
    PrefixViolation { aux: usize, level: usize },

    #[error("level {0} is missing from the estimator hierarchy")]
    MissingLevel(usize),

    #[error(
        "stopping criterion not met after reaching the level cap {max_level} (d2 = {last_d2:e})"
    )]
    LevelCapReached { max_level: usize, last_d2: f64 },

    #[error("budget {budget} is below the level-0 cost {required}")]
    BudgetTooSmall { budget: u64, required: u64 },

    #[error("duplicate abscissa {0} in slope fit")]
    DuplicateAbscissa(f64),

    #[error("sample has zero standard deviation")]
    DegenerateSample,

    #[error("total-variance estimate {0} is not positive")]
    NonPositiveTotalVariance(f64),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
