use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// One entry per offending field, e.g. `covariate_sd must be > 0 (got 0)`.
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid cohort: {0}")]
    InvalidCohort(String),

    #[error("propensity model did not converge")]
    PropensityNotConverged,

    #[error("propensity score {ps:e} for subject {subject} is numerically 0 or 1")]
    ExtremePropensity { subject: usize, ps: f64 },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("malformed artifact {}: {reason}", .path.display())]
    MalformedArtifact { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics or IO.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidScenario(_)
                | Error::InvalidDesign(_)
                | Error::InvalidCohort(_)
                | Error::Config(_)
                | Error::Domain(_)
        )
    }
}
