use std::collections::HashSet;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap};
use axum::response::IntoResponse;
use axum::Json;
use chrono::{DateTime, Utc};
use moodtune_core::api::{
    AuthCallbackResponse, CreateSessionRequest, CreateSessionResponse, PairItem, PairRequest,
    PairResponse, RatingRequest, RatingResponse,
};
use moodtune_core::catalog::UserSession;
use moodtune_core::pipeline::BlindLabel;
use moodtune_core::store::{export_csv, RatingRecord, StoreError};
use moodtune_core::{
    build_candidate_pool, generate_pair, parse_mood, select_seeds, ExportFilter, SessionMode,
};
use serde::Deserialize;
use serde_json::json;
use uuid::Uuid;

use crate::error::ApiError;
use crate::state::{ActivePair, AppState};

type Shared = State<Arc<AppState>>;

const MAX_COMMENT_CHARS: usize = 2000;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::BadRequest(e.body_text()))
}

fn session_id(raw: &str) -> Result<Uuid, ApiError> {
    raw.parse().map_err(|_| ApiError::NotFound("session"))
}

pub async fn health(State(state): Shared) -> impl IntoResponse {
    let mode = match state.mode {
        SessionMode::Live => "live",
        SessionMode::Offline => "offline",
    };
    Json(json!({"status": "ok", "mode": mode}))
}

pub async fn create_session(
    State(state): Shared,
    payload: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Result<Json<CreateSessionResponse>, ApiError> {
    let request = body(payload)?;
    let pseudonym = request
        .participant_pseudonym
        .as_deref()
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .ok_or_else(|| ApiError::BadRequest("participant_pseudonym is required".into()))?;
    if let Some(mode) = request.mode {
        if mode != state.mode {
            return Err(ApiError::unprocessable(
                "mode_unavailable",
                "this server does not run sessions in that mode",
            ));
        }
    }
    let session = state
        .store
        .create_session(pseudonym, state.mode)
        .map_err(|e| match e {
            StoreError::Validation(m) => ApiError::BadRequest(m),
            other => {
                tracing::error!(error = %other, "cannot persist session");
                ApiError::Internal
            }
        })?;
    let auth_redirect = state
        .live
        .as_ref()
        .map(|live| live.authorize_url(&session.session_id.to_string()).to_string());
    tracing::info!(session = %session.session_id, "session created");
    state.register(session.session_id);
    Ok(Json(CreateSessionResponse {
        session_id: session.session_id,
        mode: session.mode,
        auth_redirect,
    }))
}

#[derive(Deserialize)]
pub struct CallbackQuery {
    code: Option<String>,
    state: Option<String>,
    error: Option<String>,
}

pub async fn auth_callback(
    State(state): Shared,
    query: Result<Query<CallbackQuery>, QueryRejection>,
) -> Result<Json<AuthCallbackResponse>, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let live = state.live.as_ref().ok_or(ApiError::NotFound("login flow"))?;
    let id = session_id(query.state.as_deref().unwrap_or_default())?;
    let entry = state.session(id).ok_or(ApiError::NotFound("session"))?;
    if query.error.is_some() {
        return Err(ApiError::AuthRequired);
    }
    let code = query
        .code
        .filter(|c| !c.is_empty())
        .ok_or_else(|| ApiError::BadRequest("code is required".into()))?;
    let user = live.exchange_code(&code).await?;
    let mut session = entry.lock().await;
    session.user = user;
    session.cached_top = None;
    tracing::info!(session = %id, "listener authorized");
    Ok(Json(AuthCallbackResponse {
        session_id: id,
        status: "authorized".into(),
    }))
}

pub async fn request_pair(
    State(state): Shared,
    Path(raw_id): Path<String>,
    payload: Result<Json<PairRequest>, JsonRejection>,
) -> Result<Json<PairResponse>, ApiError> {
    let id = session_id(&raw_id)?;
    let entry = state.session(id).ok_or(ApiError::NotFound("session"))?;
    let request = body(payload)?;
    let mood = parse_mood(&request.mood).map_err(|e| ApiError::unprocessable("unknown_mood", e.to_string()))?;

    let mut session = entry.lock().await;
    if session.active.is_some() {
        return Err(ApiError::conflict(
            "pair_pending",
            "rate both songs of the current pair first",
        ));
    }
    let config = &state.pipeline;
    let top = match &session.cached_top {
        Some(top) => top.clone(),
        None => {
            let user: UserSession = session.user.clone();
            let top = state
                .catalog
                .top_tracks(&user, config.time_range, config.top_limit)
                .await?;
            session.cached_top = Some(top.clone());
            top
        }
    };
    let seeds = select_seeds(&top, config.n_seeds, &mut session.rng)?;
    let pool = build_candidate_pool(&seeds, state.catalog.as_ref(), config).await?;
    let mut pair = generate_pair(&pool, mood, config, &mut session.rng)?;
    // Ids must stay unique across restarts, which a seeded stream cannot promise.
    pair.pair_id = Uuid::new_v4();
    state.store.record_pair(id, &pair).map_err(|e| {
        tracing::error!(error = %e, "cannot persist pair");
        ApiError::Internal
    })?;
    tracing::info!(session = %id, pair = %pair.pair_id, %mood, pool = pool.len(), "pair issued");

    let response = PairResponse {
        pair_id: pair.pair_id,
        items: pair
            .presented()
            .into_iter()
            .map(|(label, track)| PairItem {
                label: label.as_str().to_string(),
                title: track.title.clone(),
                artist: track.artist.clone(),
            })
            .collect(),
    };
    session.active = Some(ActivePair {
        pair,
        rated: HashSet::new(),
    });
    Ok(Json(response))
}

pub async fn submit_rating(
    State(state): Shared,
    Path(raw_id): Path<String>,
    payload: Result<Json<RatingRequest>, JsonRejection>,
) -> Result<Json<RatingResponse>, ApiError> {
    let id = session_id(&raw_id)?;
    let entry = state.session(id).ok_or(ApiError::NotFound("session"))?;
    let request = body(payload)?;
    let label = BlindLabel::parse(&request.label)
        .ok_or_else(|| ApiError::unprocessable("invalid_label", "label must be A or B"))?;
    if !(1..=5).contains(&request.rating) {
        return Err(ApiError::unprocessable(
            "rating_out_of_range",
            format!("rating {} is outside 1 to 5", request.rating),
        ));
    }
    let comment = request
        .comment
        .map(|c| c.trim().to_string())
        .filter(|c| !c.is_empty());
    if comment.as_ref().is_some_and(|c| c.chars().count() > MAX_COMMENT_CHARS) {
        return Err(ApiError::unprocessable(
            "comment_too_long",
            format!("comments are limited to {MAX_COMMENT_CHARS} characters"),
        ));
    }

    let mut session = entry.lock().await;
    let active = match session.active.as_mut() {
        Some(active) if active.pair.pair_id == request.pair_id => active,
        _ => {
            return Err(match state.store.pair(request.pair_id) {
                Some(p) if p.session_id == id => {
                    ApiError::conflict("pair_closed", "this pair is already rated")
                }
                _ => ApiError::NotFound("pair"),
            })
        }
    };
    if active.rated.contains(&label) {
        return Err(ApiError::conflict("duplicate_rating", format!("song {} is already rated", label.as_str())));
    }
    let record = RatingRecord {
        pair_id: active.pair.pair_id,
        arm: active.pair.arm_for(label),
        rating: request.rating as u8,
        mood: active.pair.mood,
        comment,
        rated_at: Utc::now(),
    };
    state.store.record_rating(id, record).map_err(|e| match e {
        StoreError::DuplicateRating(_) => {
            ApiError::conflict("duplicate_rating", format!("song {} is already rated", label.as_str()))
        }
        other => {
            tracing::error!(error = %other, "cannot persist rating");
            ApiError::Internal
        }
    })?;
    active.rated.insert(label);
    let pair_closed = active.rated.len() == 2;
    if pair_closed {
        session.active = None;
    }
    Ok(Json(RatingResponse {
        status: "recorded".into(),
        pair_closed,
    }))
}

#[derive(Deserialize)]
pub struct ExportQuery {
    session_id: Option<Uuid>,
    mood: Option<String>,
    from: Option<DateTime<Utc>>,
    until: Option<DateTime<Utc>>,
    #[serde(default)]
    complete_only: bool,
}

fn authorized(state: &AppState, headers: &HeaderMap) -> bool {
    let Some(expected) = state.admin_token.as_ref() else {
        return false;
    };
    headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|given| given.as_bytes() == expected.expose().as_bytes())
}

pub async fn export(
    State(state): Shared,
    headers: HeaderMap,
    query: Result<Query<ExportQuery>, QueryRejection>,
) -> Result<impl IntoResponse, ApiError> {
    if !authorized(&state, &headers) {
        return Err(ApiError::Unauthorized);
    }
    let Query(query) = query.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let filter = ExportFilter {
        session_id: query.session_id,
        mood: query
            .mood
            .as_deref()
            .map(parse_mood)
            .transpose()
            .map_err(|e| ApiError::unprocessable("unknown_mood", e.to_string()))?,
        rated_from: query.from,
        rated_until: query.until,
        complete_only: query.complete_only,
    };
    let rows = state.store.export_ratings(&filter);
    Ok((
        [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
        export_csv(&rows),
    ))
}

pub async fn unknown_endpoint() -> ApiError {
    ApiError::NotFound("endpoint")
}
