//! JSON bodies exchanged with the experiment service.
//!
//! Participant-facing documents carry blind labels only; which label holds
//! which recommendation policy is resolved on the server.

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::store::SessionMode;

pub const API_PREFIX: &str = "/api/v1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    #[serde(default)]
    pub participant_pseudonym: Option<String>,
    #[serde(default)]
    pub mode: Option<SessionMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: Uuid,
    pub mode: SessionMode,
    /// Login page of the taste provider, live sessions only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_redirect: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRequest {
    pub mood: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairItem {
    pub label: String,
    pub title: String,
    pub artist: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResponse {
    pub pair_id: Uuid,
    pub items: Vec<PairItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRequest {
    pub pair_id: Uuid,
    pub label: String,
    pub rating: i64,
    #[serde(default)]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingResponse {
    pub status: String,
    /// Both items of the pair are rated and a new pair may be requested.
    pub pair_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthCallbackResponse {
    pub session_id: Uuid,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub retryable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}
