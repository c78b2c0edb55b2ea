use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config syntax error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Syntax {
        line: Option<usize>,
        message: String,
    },
    #[error("{key}: {message}")]
    Range { key: String, message: String },
    #[error("model is not admissible for the flow: {0}")]
    Admissibility(String),
    #[error(transparent)]
    Model(#[from] paneitz::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Syntax { .. } => "syntax",
            CliError::Range { .. } => "range",
            CliError::Admissibility(_) => "admissibility",
            CliError::Model(_) => "model",
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => "io",
        }
    }

    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Syntax { .. } | CliError::Range { .. } | CliError::Admissibility(_) => 2,
            _ => 1,
        }
    }
}
