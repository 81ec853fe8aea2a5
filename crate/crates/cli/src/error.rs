use std::path::PathBuf;

/// Stage-level failures. Every variant maps to a stable `kind` string so the
/// one-line error output stays machine-readable.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing artifact {path}; run `dreamlane {producer}` first")]
    MissingArtifact {
        path: PathBuf,
        producer: &'static str,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Stage(String),
    #[error(transparent)]
    Core(#[from] dreamlane_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::MissingArtifact { .. } => "missing_artifact",
            CliError::Config(_) => "config",
            CliError::Stage(_) => "stage",
            CliError::Core(_) => "core",
            CliError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
