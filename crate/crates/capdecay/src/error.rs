use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by the stage that raises them; `Config` errors mean
/// the input was rejected before any numerics ran, everything else is a
/// failure of a computation that was attempted.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid domain description (bad exponent, opening angle, radius, dimension).
    #[error("invalid domain: {0}")]
    Domain(String),

    /// Invalid mesh or grid request (resolution, radii out of range).
    #[error("invalid mesh request: {0}")]
    Mesh(String),

    /// A precondition on set arguments was violated (e.g. the compact set is
    /// not strictly contained in the surrounding open set).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An iterative solver failed to reach its tolerance.
    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    /// Exponent bookkeeping rejected a parameter combination
    /// (regime mismatch, out-of-range p or alpha, integrability index).
    #[error("exponent configuration rejected: {0}")]
    Exponents(String),

    /// A profile is missing data required by the requested operation.
    #[error("profile incomplete: {0}")]
    ProfileIncomplete(String),

    /// The requested estimate does not apply to the given inputs
    /// (failed gating check, converging integral without override).
    #[error("estimate not applicable: {0}")]
    NotApplicable(String),

    /// Configuration file rejected.
    #[error("config error: {0}")]
    Config(String),

    /// A pipeline stage failed; carries the stage name and the underlying error.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps an error with the name of the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
