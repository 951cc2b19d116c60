use thiserror::Error;

pub type Result<T> = std::result::Result<T, AloqError>;

#[derive(Debug, Error)]
pub enum AloqError {
    /// Input outside the unit box, non-finite, or with the wrong dimension.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("cholesky factorization failed after jitter ladder {ladder:?}")]
    Factorization { ladder: Vec<f64> },

    #[error("slice sampler: {0}")]
    Sampler(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulator failed at pi={pi:?}, theta={theta:?}: {reason}")]
    Simulator { pi: Vec<f64>, theta: Vec<f64>, reason: String },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AloqError {
    /// Numerical failures map to a distinct process exit code in the CLI.
    pub fn is_numerical(&self) -> bool {
        matches!(self, AloqError::Factorization { .. } | AloqError::Sampler(_))
    }
}
