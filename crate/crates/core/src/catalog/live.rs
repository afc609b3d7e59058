//! Live provider over the streaming service's web API (taste and search),
//! the Last.fm similarity API and the ReccoBeats audio-feature API.
//!
//! Base URLs are configurable so the whole provider can be pointed at a
//! local stand-in server. Error values carry the provider name and HTTP
//! status only; request URLs (which hold the similarity API key) never reach
//! an error message or a log line.

use std::time::Duration;

use async_trait::async_trait;
use reqwest::header::{HeaderMap, RETRY_AFTER};
use reqwest::{RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tokio::sync::Mutex;
use tokio::time::Instant;
use url::Url;

use super::{
    CatalogProvider, ProviderCredentials, ProviderError, Secret, TimeRange, Track,
    TrackDescriptor, UserSession,
};
use crate::selection::FeatureVector;

const TASTE: &str = "taste provider";
const SIMILARITY: &str = "similarity provider";
const FEATURES: &str = "feature provider";

/// Page size cap of the top-tracks endpoint.
const TOP_PAGE: usize = 50;
const SEARCH_LIMIT: usize = 5;

#[derive(Debug, Clone)]
pub struct LiveEndpoints {
    pub accounts_base: Url,
    pub api_base: Url,
    pub similarity_base: Url,
    pub features_base: Url,
}

impl Default for LiveEndpoints {
    fn default() -> Self {
        Self {
            accounts_base: Url::parse("https://accounts.spotify.com/").unwrap(),
            api_base: Url::parse("https://api.spotify.com/").unwrap(),
            similarity_base: Url::parse("https://ws.audioscrobbler.com/").unwrap(),
            features_base: Url::parse("https://api.reccobeats.com/").unwrap(),
        }
    }
}

impl LiveEndpoints {
    /// Every provider served from one base URL, as a local stand-in does.
    pub fn all_at(base: &Url) -> Self {
        Self {
            accounts_base: base.clone(),
            api_base: base.clone(),
            similarity_base: base.clone(),
            features_base: base.clone(),
        }
    }
}

pub struct LiveCatalog {
    http: reqwest::Client,
    endpoints: LiveEndpoints,
    credentials: ProviderCredentials,
    redirect_uri: String,
    app_token: Mutex<Option<(Secret, Instant)>>,
}

impl std::fmt::Debug for LiveCatalog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveCatalog")
            .field("endpoints", &self.endpoints)
            .field("redirect_uri", &self.redirect_uri)
            .finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct TokenResponse {
    access_token: String,
    #[serde(default = "default_expiry")]
    expires_in: u64,
}

fn default_expiry() -> u64 {
    3600
}

#[derive(Deserialize)]
struct ArtistRef {
    name: String,
}

#[derive(Deserialize)]
struct TrackItem {
    id: String,
    name: String,
    artists: Vec<ArtistRef>,
}

impl From<TrackItem> for Track {
    fn from(item: TrackItem) -> Self {
        let artist = item
            .artists
            .into_iter()
            .next()
            .map(|a| a.name)
            .unwrap_or_default();
        Track::new(item.id, item.name, artist)
    }
}

#[derive(Deserialize)]
struct Paged<T> {
    items: Vec<T>,
}

#[derive(Deserialize)]
struct SearchResponse {
    tracks: Paged<TrackItem>,
}

#[derive(Deserialize)]
struct SimilarResponse {
    #[serde(default)]
    similartracks: Option<SimilarList>,
    #[serde(default)]
    error: Option<i64>,
}

#[derive(Deserialize)]
struct SimilarList {
    #[serde(default)]
    track: Vec<SimilarItem>,
}

#[derive(Deserialize)]
struct SimilarItem {
    name: String,
    artist: ArtistRef,
}

#[derive(Deserialize)]
struct FeatureTrackList {
    content: Vec<FeatureTrackRef>,
}

#[derive(Deserialize)]
struct FeatureTrackRef {
    id: String,
}

#[derive(Deserialize)]
struct AudioFeatures {
    valence: f64,
    energy: f64,
}

fn retry_after(headers: &HeaderMap) -> Option<Duration> {
    headers
        .get(RETRY_AFTER)?
        .to_str()
        .ok()?
        .trim()
        .parse::<u64>()
        .ok()
        .map(Duration::from_secs)
}

fn transport_error(provider: &'static str, err: reqwest::Error) -> ProviderError {
    let err = err.without_url();
    ProviderError::Unavailable {
        provider,
        reason: if err.is_timeout() {
            "request timed out".into()
        } else if err.is_connect() {
            "connection failed".into()
        } else {
            "transport error".into()
        },
    }
}

async fn send_json<T: DeserializeOwned>(
    provider: &'static str,
    request: RequestBuilder,
    not_found: impl FnOnce() -> ProviderError,
) -> Result<T, ProviderError> {
    let response = request
        .send()
        .await
        .map_err(|e| transport_error(provider, e))?;
    let status = response.status();
    match status {
        s if s.is_success() => response.json::<T>().await.map_err(|_| ProviderError::Malformed {
            provider,
            reason: "unexpected response body".into(),
        }),
        StatusCode::UNAUTHORIZED => Err(ProviderError::AuthExpired),
        StatusCode::NOT_FOUND => Err(not_found()),
        StatusCode::TOO_MANY_REQUESTS => Err(ProviderError::RateLimited {
            provider,
            retry_after: retry_after(response.headers()),
        }),
        s => Err(ProviderError::Unavailable {
            provider,
            reason: format!("HTTP {}", s.as_u16()),
        }),
    }
}

impl LiveCatalog {
    pub fn new(
        credentials: ProviderCredentials,
        endpoints: LiveEndpoints,
        redirect_uri: impl Into<String>,
    ) -> Self {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(20))
            .build()
            .expect("default TLS backend is available");
        Self {
            http,
            endpoints,
            credentials,
            redirect_uri: redirect_uri.into(),
            app_token: Mutex::new(None),
        }
    }

    fn join(base: &Url, path: &str) -> Url {
        base.join(path).expect("static path joins onto a base URL")
    }

    /// Where to send the listener to grant access to their top tracks.
    /// `state` comes back unchanged on the callback.
    pub fn authorize_url(&self, state: &str) -> Url {
        let mut url = Self::join(&self.endpoints.accounts_base, "authorize");
        url.query_pairs_mut()
            .append_pair("client_id", self.credentials.taste_client_id.expose())
            .append_pair("response_type", "code")
            .append_pair("redirect_uri", &self.redirect_uri)
            .append_pair("scope", "user-top-read")
            .append_pair("state", state);
        url
    }

    async fn token_request(&self, form: &[(&str, &str)]) -> Result<TokenResponse, ProviderError> {
        let request = self
            .http
            .post(Self::join(&self.endpoints.accounts_base, "api/token"))
            .basic_auth(
                self.credentials.taste_client_id.expose(),
                Some(self.credentials.taste_client_secret.expose()),
            )
            .form(form);
        send_json(TASTE, request, || ProviderError::AuthExpired).await
    }

    /// Exchanges an authorization code for a user access token.
    pub async fn exchange_code(&self, code: &str) -> Result<UserSession, ProviderError> {
        let token = self
            .token_request(&[
                ("grant_type", "authorization_code"),
                ("code", code),
                ("redirect_uri", &self.redirect_uri),
            ])
            .await
            .map_err(|e| match e {
                ProviderError::Unavailable { reason, .. } if reason == "HTTP 400" => {
                    ProviderError::AuthExpired
                }
                other => other,
            })?;
        Ok(UserSession::with_token(Secret::new(token.access_token)))
    }

    /// App-level token for calls that are not user-scoped (search).
    async fn app_token(&self) -> Result<Secret, ProviderError> {
        let mut cached = self.app_token.lock().await;
        if let Some((token, expires)) = cached.as_ref() {
            if Instant::now() < *expires {
                return Ok(token.clone());
            }
        }
        let fresh = self
            .token_request(&[("grant_type", "client_credentials")])
            .await?;
        let token = Secret::new(fresh.access_token);
        let lifetime = Duration::from_secs(fresh.expires_in.saturating_sub(30).max(1));
        *cached = Some((token.clone(), Instant::now() + lifetime));
        Ok(token)
    }
}

#[async_trait]
impl CatalogProvider for LiveCatalog {
    async fn top_tracks(
        &self,
        session: &UserSession,
        range: TimeRange,
        limit: usize,
    ) -> Result<Vec<Track>, ProviderError> {
        let token = session.access_token.as_ref().ok_or(ProviderError::AuthExpired)?;
        let mut out = Vec::new();
        while out.len() < limit {
            let page = (limit - out.len()).min(TOP_PAGE);
            let request = self
                .http
                .get(Self::join(&self.endpoints.api_base, "v1/me/top/tracks"))
                .bearer_auth(token.expose())
                .query(&[
                    ("time_range", range.api_value().to_string()),
                    ("limit", page.to_string()),
                    ("offset", out.len().to_string()),
                ]);
            let body: Paged<TrackItem> =
                send_json(TASTE, request, || ProviderError::NotFound("top tracks".into())).await?;
            let got = body.items.len();
            out.extend(body.items.into_iter().map(Track::from));
            if got < page {
                break;
            }
        }
        out.truncate(limit);
        Ok(out)
    }

    async fn similar_tracks(
        &self,
        seed: &Track,
        limit: usize,
    ) -> Result<Vec<TrackDescriptor>, ProviderError> {
        let own = seed.descriptor();
        let request = self
            .http
            .get(Self::join(&self.endpoints.similarity_base, "2.0/"))
            .query(&[
                ("method", "track.getsimilar"),
                ("artist", own.artist.as_str()),
                ("track", own.title.as_str()),
                ("api_key", self.credentials.similarity_api_key.expose()),
                ("format", "json"),
                ("limit", &(limit + 1).to_string()),
            ]);
        let body: SimilarResponse =
            send_json(SIMILARITY, request, || ProviderError::NotFound(own.to_string())).await?;
        match body.error {
            None => {}
            Some(6) => return Err(ProviderError::NotFound(own.to_string())),
            Some(29) => {
                return Err(ProviderError::RateLimited {
                    provider: SIMILARITY,
                    retry_after: None,
                })
            }
            Some(code) => {
                return Err(ProviderError::Unavailable {
                    provider: SIMILARITY,
                    reason: format!("error code {code}"),
                })
            }
        }
        Ok(body
            .similartracks
            .map(|l| l.track)
            .unwrap_or_default()
            .into_iter()
            .map(|item| TrackDescriptor::new(item.artist.name, item.name))
            .filter(|d| !d.same_song(&own))
            .take(limit)
            .collect())
    }

    async fn search(&self, descriptor: &TrackDescriptor) -> Result<Vec<Track>, ProviderError> {
        let token = self.app_token().await?;
        let query = format!("track:{} artist:{}", descriptor.title, descriptor.artist);
        let request = self
            .http
            .get(Self::join(&self.endpoints.api_base, "v1/search"))
            .bearer_auth(token.expose())
            .query(&[
                ("q", query.as_str()),
                ("type", "track"),
                ("limit", &SEARCH_LIMIT.to_string()),
            ]);
        let body: SearchResponse = send_json(TASTE, request, || {
            ProviderError::NotFound(descriptor.to_string())
        })
        .await?;
        Ok(body.tracks.items.into_iter().map(Track::from).collect())
    }

    async fn feature_source_id(&self, canonical_id: &str) -> Result<String, ProviderError> {
        let request = self
            .http
            .get(Self::join(&self.endpoints.features_base, "v1/track"))
            .query(&[("ids", canonical_id)]);
        let body: FeatureTrackList = send_json(FEATURES, request, || {
            ProviderError::UnmappedTrack(canonical_id.to_string())
        })
        .await?;
        body.content
            .into_iter()
            .next()
            .map(|r| r.id)
            .ok_or_else(|| ProviderError::UnmappedTrack(canonical_id.to_string()))
    }

    async fn features_for(&self, feature_source_id: &str) -> Result<FeatureVector, ProviderError> {
        let path = format!("v1/track/{feature_source_id}/audio-features");
        let request = self.http.get(Self::join(&self.endpoints.features_base, &path));
        let body: AudioFeatures = send_json(FEATURES, request, || {
            ProviderError::NotFound(format!("features for {feature_source_id}"))
        })
        .await?;
        FeatureVector::new(body.valence, body.energy).map_err(|e| ProviderError::Malformed {
            provider: FEATURES,
            reason: e.to_string(),
        })
    }
}
