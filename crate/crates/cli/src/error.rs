use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown experiment '{0}' (see `dtcascade list`)")]
    UnknownExperiment(String),
    #[error("malformed config: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(#[from] dtcascade::Error),
    #[error("work budget exceeded: {needed} steps requested, budget {budget}")]
    Budget { needed: u64, budget: u64 },
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 3 for numeric or budget failures and I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::UnknownExperiment(_) | CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Budget { .. } | CliError::Io { .. } => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
