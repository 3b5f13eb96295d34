use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("nonstationary parameters: sum(alpha) + sum(beta) = {persistence} >= 1")]
    NonstationaryParams { persistence: f64 },

    #[error("non-positive conditional variance {value} at t = {t}")]
    NonpositiveVariance { t: usize, value: f64 },

    #[error("shock window [{start}, {end}) does not fit a series of length {len}")]
    InvalidShockWindow { start: usize, end: usize, len: usize },

    #[error("insufficient history: need {needed} observations, got {got}")]
    InsufficientHistory { needed: usize, got: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("optimizer did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("shock dummy is not identified: {0}")]
    Unidentified(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("semi-norm matrix is not positive semidefinite (min eigenvalue {min_eigenvalue})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("day {day}: expected {expected} intraday blocks, found {found}")]
    BlockCountMismatch { day: usize, expected: usize, found: usize },

    #[error("missing intraday block: {0}")]
    MissingBlock(String),

    #[error("non-positive input to loss: {0}")]
    NonpositiveInput(f64),

    #[error("non-positive ground truth {0}")]
    NonpositiveGroundTruth(f64),

    #[error("outside domain: {0}")]
    DomainError(String),

    #[error("replication failed: {0}")]
    ReplicationFailed(String),

    #[error("configuration infeasible: {0}")]
    ConfigurationInfeasible(String),

    #[error("donor {donor}: {source}")]
    DonorFailed { donor: String, source: Box<Error> },
}

impl Error {
    /// True for failures of the numerics (as opposed to malformed input).
    pub fn is_numerical(&self) -> bool {
        if let Error::DonorFailed { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::NonpositiveVariance { .. }
                | Error::NotConverged { .. }
                | Error::DegenerateData(_)
                | Error::Unidentified(_)
                | Error::ReplicationFailed(_)
        )
    }
}
