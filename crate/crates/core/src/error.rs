use thiserror::Error;

/// Everything that can go wrong while loading, estimating, adjusting or simulating.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NsumError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },

    #[error("row {row}, column `{label}`: {reason}")]
    BadCell { row: usize, label: String, reason: String },

    #[error("missing response at row {row}, column `{label}`")]
    MissingCell { row: usize, label: String },

    #[error("every respondent row was dropped for missing responses")]
    AllRowsDropped,

    #[error("metadata: {0}")]
    Metadata(String),

    #[error("unknown subpopulation label `{0}`")]
    UnknownLabel(String),

    #[error("invalid survey: {0}")]
    InvalidSurvey(String),

    #[error("filter: {0}")]
    Filter(String),

    #[error("subpopulation {0} is out of range")]
    IndexOutOfRange(usize),

    #[error("subpopulation {0} is hidden; a leave-one-out estimate needs a known size")]
    HiddenLeaveOneOut(usize),

    #[error("leave-one-out degrees undefined without subpopulation {0}: remaining known sizes sum to zero")]
    DegenerateLeaveOneOut(usize),

    #[error("respondent degrees sum to zero")]
    ZeroDegreeSum,

    #[error("subpopulation {0} has an all-zero response column")]
    ZeroColumn(usize),

    #[error("regressor has zero variance")]
    ZeroVariance,

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("{0}")]
    Degenerate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("probability {p} outside [0, 1] for respondent {respondent}, subpopulation {subpopulation}")]
    ProbabilityOutOfRange { p: f64, respondent: usize, subpopulation: usize },
}

impl NsumError {
    /// True for failures of the numerics (degenerate data) as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            NsumError::DegenerateLeaveOneOut(_)
                | NsumError::ZeroDegreeSum
                | NsumError::ZeroColumn(_)
                | NsumError::ZeroVariance
                | NsumError::TooFewPoints { .. }
                | NsumError::Degenerate(_)
        )
    }

    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        NsumError::Io { path: path.display().to_string(), message: err.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, NsumError>;
