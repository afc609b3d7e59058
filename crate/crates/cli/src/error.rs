use moodtune_client::ClientError;
use moodtune_core::catalog::FixtureError;
use moodtune_core::store::StoreError;
use moodtune_core::stats::StatsError;
use moodtune_core::PipelineError;
use moodtune_service::StartupError;
use thiserror::Error;

/// A failed command. The variant picks the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Provider(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<FixtureError> for CliError {
    fn from(e: FixtureError) -> Self {
        match e {
            FixtureError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io(_) | StoreError::Corrupt { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Provider(p) if !p.is_missing_data() => CliError::Provider(p.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<StartupError> for CliError {
    fn from(e: StartupError) -> Self {
        match e {
            StartupError::Config(_) => CliError::Validation(e.to_string()),
            StartupError::Fixture(f) => f.into(),
            StartupError::Store(s) => CliError::Io(format!("cannot open experiment store: {s}")),
            StartupError::Bind { .. } | StartupError::Serve(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match &e {
            ClientError::Transport(_) => CliError::Io(e.to_string()),
            ClientError::Api { status, .. } if *status >= 500 => CliError::Provider(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
