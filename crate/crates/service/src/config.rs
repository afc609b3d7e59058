use std::net::SocketAddr;
use std::path::PathBuf;

use moodtune_core::catalog::{MissingVariable, ProviderCredentials, Secret};
use moodtune_core::{FetchPolicy, PipelineConfig, SessionMode};
use thiserror::Error;

pub const ENV_MODE: &str = "MOODTUNE_MODE";
pub const ENV_FIXTURE_PATH: &str = "MOODTUNE_FIXTURE_PATH";
pub const ENV_BIND_ADDR: &str = "MOODTUNE_BIND_ADDR";
pub const ENV_ADMIN_TOKEN: &str = "MOODTUNE_ADMIN_TOKEN";
pub const ENV_STORE_PATH: &str = "MOODTUNE_STORE_PATH";
pub const ENV_UI_DIR: &str = "MOODTUNE_UI_DIR";
pub const ENV_SEED: &str = "MOODTUNE_SEED";
pub const ENV_REDIRECT_URI: &str = "MOODTUNE_REDIRECT_URI";

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing required environment variable {0}")]
    Missing(&'static str),
    #[error("invalid value for {variable}: {message}")]
    Invalid {
        variable: &'static str,
        message: String,
    },
}

impl From<MissingVariable> for ConfigError {
    fn from(m: MissingVariable) -> Self {
        ConfigError::Missing(m.0)
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub mode: SessionMode,
    pub fixture_path: Option<PathBuf>,
    pub bind_addr: SocketAddr,
    pub admin_token: Option<Secret>,
    /// Journal file; in-memory when absent.
    pub store_path: Option<PathBuf>,
    pub ui_dir: Option<PathBuf>,
    /// Master seed for per-session randomness; drawn from the OS when absent.
    pub seed: Option<u64>,
    pub credentials: Option<ProviderCredentials>,
    pub redirect_uri: Option<String>,
    pub pipeline: PipelineConfig,
}

impl ServiceConfig {
    pub fn offline(fixture_path: impl Into<PathBuf>) -> Self {
        Self {
            mode: SessionMode::Offline,
            fixture_path: Some(fixture_path.into()),
            bind_addr: DEFAULT_BIND.parse().unwrap(),
            admin_token: None,
            store_path: None,
            ui_dir: None,
            seed: None,
            credentials: None,
            redirect_uri: None,
            pipeline: PipelineConfig {
                fetch: FetchPolicy::local(),
                ..PipelineConfig::default()
            },
        }
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|name| std::env::var(name).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let get = |name: &str| lookup(name).filter(|v| !v.trim().is_empty());
        let mode = match get(ENV_MODE).as_deref().map(str::trim) {
            None | Some("offline") => SessionMode::Offline,
            Some("live") => SessionMode::Live,
            Some(other) => {
                return Err(ConfigError::Invalid {
                    variable: ENV_MODE,
                    message: format!("expected live or offline, got {other:?}"),
                })
            }
        };
        let bind_addr = get(ENV_BIND_ADDR)
            .unwrap_or_else(|| DEFAULT_BIND.to_string())
            .trim()
            .parse()
            .map_err(|e: std::net::AddrParseError| ConfigError::Invalid {
                variable: ENV_BIND_ADDR,
                message: e.to_string(),
            })?;
        let seed = get(ENV_SEED)
            .map(|s| {
                s.trim().parse::<u64>().map_err(|e| ConfigError::Invalid {
                    variable: ENV_SEED,
                    message: e.to_string(),
                })
            })
            .transpose()?;

        let mut config = match mode {
            SessionMode::Offline => {
                let fixture = get(ENV_FIXTURE_PATH).ok_or(ConfigError::Missing(ENV_FIXTURE_PATH))?;
                Self::offline(fixture)
            }
            SessionMode::Live => Self {
                mode,
                fixture_path: None,
                credentials: Some(ProviderCredentials::from_lookup(get)?),
                pipeline: PipelineConfig::default(),
                ..Self::offline("")
            },
        };
        config.bind_addr = bind_addr;
        config.seed = seed;
        config.admin_token = get(ENV_ADMIN_TOKEN).map(Secret::new);
        config.store_path = get(ENV_STORE_PATH).map(PathBuf::from);
        config.ui_dir = get(ENV_UI_DIR).map(PathBuf::from);
        config.redirect_uri = get(ENV_REDIRECT_URI);
        Ok(config)
    }

    /// Where the taste provider sends the listener back after login.
    pub fn callback_uri(&self) -> String {
        self.redirect_uri
            .clone()
            .unwrap_or_else(|| format!("http://{}/api/v1/auth/callback", self.bind_addr))
    }
}
