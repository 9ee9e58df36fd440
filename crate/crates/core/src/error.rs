use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DmqError {
    #[error("invalid direction: {0}")]
    InvalidDirection(String),

    #[error("factorization failed for {matrix}: {reason}")]
    Factorization { matrix: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("positivity violated on marginal {marginal}: threshold {threshold} <= 0; recenter data")]
    NonPositiveThreshold { marginal: usize, threshold: f64 },

    #[error("degenerate moments on marginal {marginal}: {reason}")]
    DegenerateMoments { marginal: usize, reason: String },

    #[error("heavy-tail assumption violated on marginal {marginal}: gamma = {gamma} <= 0")]
    NonPositiveGamma { marginal: usize, gamma: f64 },

    #[error(
        "rotated marginals {marginals:?} have non-positive upper thresholds; \
         recenter data, e.g. subtract the componentwise median {suggested_center:?}"
    )]
    NeedsCentering {
        marginals: Vec<usize>,
        suggested_center: Vec<f64>,
    },

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("unsupported dimension {0} for the analytical t oracle")]
    UnsupportedDimension(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl DmqError {
    /// Attach a marginal index to errors produced on an anonymous marginal.
    pub(crate) fn on_marginal(self, j: usize) -> Self {
        match self {
            DmqError::NonPositiveThreshold { threshold, .. } => DmqError::NonPositiveThreshold {
                marginal: j,
                threshold,
            },
            DmqError::DegenerateMoments { reason, .. } => {
                DmqError::DegenerateMoments { marginal: j, reason }
            }
            DmqError::NonPositiveGamma { gamma, .. } => {
                DmqError::NonPositiveGamma { marginal: j, gamma }
            }
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, DmqError>;
