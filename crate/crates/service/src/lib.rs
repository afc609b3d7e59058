//! HTTP/JSON service running blinded listening sessions.
//!
//! Participants create a session, ask for a pair of songs for a mood, and
//! rate each song under its label. Which label carries which recommendation
//! policy is known only to the server and the admin export.

mod config;
mod error;
mod routes;
mod state;

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::http::Request;
use axum::routing::{get, post};
use axum::Router;
use moodtune_core::api::API_PREFIX;
use moodtune_core::catalog::FixtureError;
use moodtune_core::store::StoreError;
use thiserror::Error;
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

pub use config::{ConfigError, ServiceConfig};
pub use error::ApiError;
pub use state::AppState;

pub mod env {
    pub use crate::config::{
        ENV_ADMIN_TOKEN, ENV_BIND_ADDR, ENV_FIXTURE_PATH, ENV_MODE, ENV_REDIRECT_URI, ENV_SEED,
        ENV_STORE_PATH, ENV_UI_DIR,
    };
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot load fixture catalog: {0}")]
    Fixture(#[from] FixtureError),
    #[error("cannot open experiment store: {0}")]
    Store(#[from] StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Serve(std::io::Error),
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(routes::health))
        .route("/session", post(routes::create_session))
        .route("/auth/callback", get(routes::auth_callback))
        .route("/session/{id}/pair", post(routes::request_pair))
        .route("/session/{id}/rating", post(routes::submit_rating))
        .route("/admin/export", get(routes::export))
        .fallback(routes::unknown_endpoint)
        .with_state(state);
    let app = Router::new().nest(API_PREFIX, api);
    let app = match ui_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    // Spans carry the path only: query strings can hold login codes.
    app.layer(TraceLayer::new_for_http().make_span_with(|req: &Request<_>| {
        tracing::info_span!("request", method = %req.method(), path = %req.uri().path())
    }))
}

pub async fn run(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    ui_dir: Option<PathBuf>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), StartupError> {
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(StartupError::Serve)
}

/// Builds state from `config`, binds, and serves until `shutdown` resolves.
pub async fn serve(
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), StartupError> {
    let state = Arc::new(AppState::from_config(&config)?);
    let listener = tokio::net::TcpListener::bind(config.bind_addr)
        .await
        .map_err(|source| StartupError::Bind {
            addr: config.bind_addr,
            source,
        })?;
    let local = listener.local_addr().map_err(StartupError::Serve)?;
    tracing::info!(addr = %local, mode = ?config.mode, "listening");
    run(listener, state, config.ui_dir.clone(), shutdown).await
}
