use thiserror::Error;

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] lsmo_core::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PipelineError {
    pub fn config(msg: impl Into<String>) -> Self {
        PipelineError::Config(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        PipelineError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit status: 2 for configuration problems, 3 for numeric
    /// divergence during training, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use lsmo_core::Error as E;
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Core(E::Divergence { .. }) => 3,
            PipelineError::Core(E::InvalidArgument(_) | E::DimensionMismatch { .. } | E::Format(_) | E::Json(_)) => 2,
            PipelineError::Json(_) => 2,
            _ => 1,
        }
    }
}
