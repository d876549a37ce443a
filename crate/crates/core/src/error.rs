use thiserror::Error;

use crate::mdp::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("episode index {episode} out of range (K = {n_episodes})")]
    EpisodeOutOfRange { episode: usize, n_episodes: usize },

    #[error("step index {step} out of range (H = {horizon})")]
    StepOutOfRange { step: usize, horizon: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(ValidationReport),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("expected {expected} policies (one per episode), got {got}")]
    PolicyCount { expected: usize, got: usize },

    #[error("invalid drift specification: {0}")]
    InvalidDrift(String),

    #[error("empty function class")]
    EmptyClass,

    #[error("empty residual class")]
    EmptyResidualClass,

    #[error("residual magnitude {0} exceeds the horizon bound")]
    ResidualBound(f64),

    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),

    #[error("exhaustive search exceeded its budget ({0})")]
    SearchBudget(String),

    #[error("empty confidence set at episode {episode}")]
    EmptyConfidenceSet { episode: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
