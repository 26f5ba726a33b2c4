use thiserror::Error;

pub type Result<T, E = BtnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum BtnError {
    #[error("unknown id or name: {0}")]
    UnknownId(String),
    #[error("conflicting truth value for {0}")]
    Conflict(String),
    #[error("duplicate quadruple {0}")]
    Duplicate(String),
    #[error("instance {0} has no positive triples")]
    EmptyInstance(String),
    #[error("store has no positive triples")]
    EmptyStore,
    #[error("fusion weights gamma and n_t are both zero")]
    ZeroWeights,
    #[error("missing input: {0}")]
    MissingInput(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("empty index set: {0}")]
    EmptyIndexSet(&'static str),
    #[error("non-finite value in layer {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unknown experiment {name:?}; valid names: {valid}")]
    UnknownExperiment { name: String, valid: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BtnError {
    /// Process exit code for the command-line tool: 2 usage, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            BtnError::MissingInput(_)
            | BtnError::Config(_)
            | BtnError::UnknownExperiment { .. }
            | BtnError::InvalidInput(_) => 2,
            BtnError::NonFinite(_) | BtnError::Divergence { .. } => 4,
            _ => 3,
        }
    }
}
