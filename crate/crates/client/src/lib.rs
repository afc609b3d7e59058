//! Thin client for the experiment service's `/api/v1` surface.

use moodtune_core::api::{
    CreateSessionRequest, CreateSessionResponse, ErrorBody, PairRequest, PairResponse,
    RatingRequest, RatingResponse, API_PREFIX,
};
use moodtune_core::SessionMode;
use serde::de::DeserializeOwned;
use thiserror::Error;
use url::Url;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid service URL: {0}")]
    BadUrl(#[from] url::ParseError),
    #[error("cannot reach the service: {0}")]
    Transport(String),
    #[error("service answered {status} {code}: {message}")]
    Api {
        status: u16,
        code: String,
        message: String,
        retryable: bool,
    },
    #[error("unexpected response: {0}")]
    Decode(String),
}

impl ClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

fn transport(e: reqwest::Error) -> ClientError {
    ClientError::Transport(e.without_url().to_string())
}

/// Filters accepted by the admin export.
#[derive(Debug, Clone, Default)]
pub struct ExportQuery {
    pub session_id: Option<Uuid>,
    pub mood: Option<String>,
    pub from: Option<String>,
    pub until: Option<String>,
    pub complete_only: bool,
}

#[derive(Clone)]
pub struct MoodtuneClient {
    http: reqwest::Client,
    api: Url,
    admin_token: Option<String>,
}

impl std::fmt::Debug for MoodtuneClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MoodtuneClient")
            .field("api", &self.api.as_str())
            .field("admin_token", &self.admin_token.as_ref().map(|_| "***"))
            .finish()
    }
}

impl MoodtuneClient {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: &str) -> Result<Self, ClientError> {
        let mut root = Url::parse(base)?;
        if !root.path().ends_with('/') {
            root.set_path(&format!("{}/", root.path()));
        }
        Ok(Self {
            http: reqwest::Client::new(),
            api: root.join(&format!("{}/", API_PREFIX.trim_start_matches('/')))?,
            admin_token: None,
        })
    }

    pub fn with_admin_token(mut self, token: impl Into<String>) -> Self {
        self.admin_token = Some(token.into());
        self
    }

    fn url(&self, path: &str) -> Result<Url, ClientError> {
        Ok(self.api.join(path)?)
    }

    async fn read<T: DeserializeOwned>(response: reqwest::Response) -> Result<T, ClientError> {
        let status = response.status();
        let bytes = response.bytes().await.map_err(transport)?;
        if status.is_success() {
            return serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()));
        }
        Err(match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(body) => ClientError::Api {
                status: status.as_u16(),
                code: body.error.code,
                message: body.error.message,
                retryable: body.error.retryable,
            },
            Err(_) => ClientError::Api {
                status: status.as_u16(),
                code: "unknown".into(),
                message: String::from_utf8_lossy(&bytes).chars().take(200).collect(),
                retryable: false,
            },
        })
    }

    pub async fn health(&self) -> Result<serde_json::Value, ClientError> {
        let resp = self.http.get(self.url("health")?).send().await.map_err(transport)?;
        Self::read(resp).await
    }

    pub async fn create_session(
        &self,
        participant_pseudonym: &str,
        mode: Option<SessionMode>,
    ) -> Result<CreateSessionResponse, ClientError> {
        let body = CreateSessionRequest {
            participant_pseudonym: Some(participant_pseudonym.to_string()),
            mode,
        };
        let resp = self
            .http
            .post(self.url("session")?)
            .json(&body)
            .send()
            .await
            .map_err(transport)?;
        Self::read(resp).await
    }

    pub async fn request_pair(&self, session_id: Uuid, mood: &str) -> Result<PairResponse, ClientError> {
        let resp = self
            .http
            .post(self.url(&format!("session/{session_id}/pair"))?)
            .json(&PairRequest { mood: mood.to_string() })
            .send()
            .await
            .map_err(transport)?;
        Self::read(resp).await
    }

    pub async fn submit_rating(
        &self,
        session_id: Uuid,
        pair_id: Uuid,
        label: &str,
        rating: i64,
        comment: Option<String>,
    ) -> Result<RatingResponse, ClientError> {
        let body = RatingRequest {
            pair_id,
            label: label.to_string(),
            rating,
            comment,
        };
        let resp = self
            .http
            .post(self.url(&format!("session/{session_id}/rating"))?)
            .json(&body)
            .send()
            .await
            .map_err(transport)?;
        Self::read(resp).await
    }

    /// The ratings export as CSV text.
    pub async fn export(&self, query: &ExportQuery) -> Result<String, ClientError> {
        let mut url = self.url("admin/export")?;
        {
            let mut pairs = url.query_pairs_mut();
            if let Some(s) = query.session_id {
                pairs.append_pair("session_id", &s.to_string());
            }
            if let Some(m) = &query.mood {
                pairs.append_pair("mood", m);
            }
            if let Some(f) = &query.from {
                pairs.append_pair("from", f);
            }
            if let Some(u) = &query.until {
                pairs.append_pair("until", u);
            }
            if query.complete_only {
                pairs.append_pair("complete_only", "true");
            }
        }
        if url.query() == Some("") {
            url.set_query(None);
        }
        let mut request = self.http.get(url);
        if let Some(token) = &self.admin_token {
            request = request.bearer_auth(token);
        }
        let resp = request.send().await.map_err(transport)?;
        if resp.status().is_success() {
            return resp.text().await.map_err(transport);
        }
        Self::read::<serde_json::Value>(resp).await.map(|_| String::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn api_root_is_joined_once() {
        for base in ["http://h:1", "http://h:1/", "http://h:1/prefix", "http://h:1/prefix/"] {
            let c = MoodtuneClient::new(base).unwrap();
            assert!(c.url("session").unwrap().as_str().ends_with("/api/v1/session"), "{base}");
        }
        assert_eq!(
            MoodtuneClient::new("http://h:1/prefix").unwrap().url("health").unwrap().as_str(),
            "http://h:1/prefix/api/v1/health"
        );
    }

    #[test]
    fn debug_hides_admin_token() {
        let c = MoodtuneClient::new("http://h:1").unwrap().with_admin_token("letmein");
        assert!(!format!("{c:?}").contains("letmein"));
    }
}
