use thiserror::Error;

/// Errors raised by the embedding, reduction and region routines.
#[derive(Debug, Error)]
pub enum LpvError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("decomposition failed: {0}")]
    Decomposition(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("malformed artifact: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact {path}; run `{producer}` first")]
    MissingArtifact { path: String, producer: String },
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<LpvError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl LpvError {
    /// Whether the error stems from invalid configuration rather than a
    /// failing computation.
    pub fn is_config(&self) -> bool {
        match self {
            LpvError::Config(_) => true,
            LpvError::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, LpvError>;

pub(crate) fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(LpvError::DimensionMismatch {
            what: what.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}
