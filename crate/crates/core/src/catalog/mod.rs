//! Catalog providers: where tracks, similarity and audio features come from.
//!
//! A provider answers four questions:
//!
//! 1. what a listener plays most ([`CatalogProvider::top_tracks`]),
//! 2. which songs are similar to a seed ([`CatalogProvider::similar_tracks`]),
//! 3. which catalog track a free-text `(artist, title)` pair refers to
//!    ([`CatalogProvider::search`]),
//! 4. what a track's valence and energy are, via a two-step lookup
//!    ([`CatalogProvider::feature_source_id`] then
//!    [`CatalogProvider::features_for`]).
//!
//! [`FixtureCatalog`] answers from a local file, [`LiveCatalog`] from the
//! public web APIs. Batches of calls go through [`fetch_many`].

mod fetch;
mod fixture;
mod live;

use std::fmt;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::selection::FeatureVector;

pub use fetch::{fetch_many, FetchPolicy, Keyed};
pub use fixture::{
    load_fixture_catalog, parse_fixture_catalog, FixtureCatalog, FixtureDocument, FixtureError,
    FixtureReport, SearchRow, SimilarityRow, TrackRow, FIXTURE_SCHEMA_VERSION,
};
pub use live::{LiveCatalog, LiveEndpoints};

pub const ENV_TASTE_CLIENT_ID: &str = "MOODTUNE_TASTE_CLIENT_ID";
pub const ENV_TASTE_CLIENT_SECRET: &str = "MOODTUNE_TASTE_CLIENT_SECRET";
pub const ENV_SIMILARITY_API_KEY: &str = "MOODTUNE_SIMILARITY_API_KEY";

/// A song with identifiers from each provider it has been matched against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub canonical_id: String,
    pub title: String,
    pub artist: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity_source_key: Option<TrackDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureVector>,
}

impl Track {
    pub fn new(
        canonical_id: impl Into<String>,
        title: impl Into<String>,
        artist: impl Into<String>,
    ) -> Self {
        Self {
            canonical_id: canonical_id.into(),
            title: title.into(),
            artist: artist.into(),
            similarity_source_key: None,
            feature_source_id: None,
            features: None,
        }
    }

    pub fn descriptor(&self) -> TrackDescriptor {
        TrackDescriptor::new(self.artist.clone(), self.title.clone())
    }
}

/// Free-text reference to a song, as returned by the similarity source.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrackDescriptor {
    pub artist: String,
    pub title: String,
}

impl TrackDescriptor {
    pub fn new(artist: impl Into<String>, title: impl Into<String>) -> Self {
        Self {
            artist: artist.into(),
            title: title.into(),
        }
    }

    /// Case-insensitive identity on artist and title.
    pub fn same_song(&self, other: &TrackDescriptor) -> bool {
        self.normalized_key() == other.normalized_key()
    }

    pub fn normalized_key(&self) -> (String, String) {
        (
            self.artist.trim().to_lowercase(),
            self.title.trim().to_lowercase(),
        )
    }
}

impl fmt::Display for TrackDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} - {}", self.artist, self.title)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeRange {
    Short,
    #[default]
    Medium,
    Long,
}

impl TimeRange {
    pub fn api_value(self) -> &'static str {
        match self {
            TimeRange::Short => "short_term",
            TimeRange::Medium => "medium_term",
            TimeRange::Long => "long_term",
        }
    }
}

/// Secret text. Never printed by `Debug` and never serialized.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[derive(Debug, Clone)]
pub struct ProviderCredentials {
    pub taste_client_id: Secret,
    pub taste_client_secret: Secret,
    pub similarity_api_key: Secret,
}

impl ProviderCredentials {
    /// Reads all three variables; the error names the first one missing.
    pub fn from_env() -> Result<Self, MissingVariable> {
        Self::from_lookup(|name| std::env::var(name).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, MissingVariable> {
        let get = |name: &'static str| {
            lookup(name)
                .filter(|v| !v.trim().is_empty())
                .map(Secret::new)
                .ok_or(MissingVariable(name))
        };
        Ok(Self {
            taste_client_id: get(ENV_TASTE_CLIENT_ID)?,
            taste_client_secret: get(ENV_TASTE_CLIENT_SECRET)?,
            similarity_api_key: get(ENV_SIMILARITY_API_KEY)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("missing environment variable {0}")]
pub struct MissingVariable(pub &'static str);

/// Per-listener state a provider needs for user-scoped calls.
#[derive(Debug, Clone, Default)]
pub struct UserSession {
    pub access_token: Option<Secret>,
}

impl UserSession {
    pub fn anonymous() -> Self {
        Self::default()
    }

    pub fn with_token(token: Secret) -> Self {
        Self {
            access_token: Some(token),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    #[error("authorization expired; log in again")]
    AuthExpired,
    #[error("{provider} is unavailable: {reason}")]
    Unavailable {
        provider: &'static str,
        reason: String,
    },
    #[error("{provider} rate limited the request")]
    RateLimited {
        provider: &'static str,
        retry_after: Option<Duration>,
    },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("track {0} has no audio-feature mapping")]
    UnmappedTrack(String),
    #[error("malformed response from {provider}: {reason}")]
    Malformed {
        provider: &'static str,
        reason: String,
    },
}

impl ProviderError {
    /// Errors worth another attempt after a pause.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            ProviderError::RateLimited { .. } | ProviderError::Unavailable { .. }
        )
    }

    /// Errors that mean "this item has no usable data", as opposed to a
    /// provider failure.
    pub fn is_missing_data(&self) -> bool {
        matches!(
            self,
            ProviderError::NotFound(_) | ProviderError::UnmappedTrack(_)
        )
    }
}

#[async_trait]
pub trait CatalogProvider: Send + Sync {
    /// Up to `limit` of the listener's most played tracks. Features absent.
    async fn top_tracks(
        &self,
        session: &UserSession,
        range: TimeRange,
        limit: usize,
    ) -> Result<Vec<Track>, ProviderError>;

    /// Up to `limit` songs similar to `seed`, never the seed itself.
    async fn similar_tracks(
        &self,
        seed: &Track,
        limit: usize,
    ) -> Result<Vec<TrackDescriptor>, ProviderError>;

    /// Search hits for a descriptor, best first.
    async fn search(&self, descriptor: &TrackDescriptor) -> Result<Vec<Track>, ProviderError>;

    /// First feature lookup step: catalog id to feature-source id.
    async fn feature_source_id(&self, canonical_id: &str) -> Result<String, ProviderError>;

    /// Second feature lookup step.
    async fn features_for(&self, feature_source_id: &str) -> Result<FeatureVector, ProviderError>;
}

/// Resolves a descriptor to the first search hit whose artist matches
/// case-insensitively.
pub async fn resolve_track(
    provider: &dyn CatalogProvider,
    descriptor: &TrackDescriptor,
) -> Result<Track, ProviderError> {
    if descriptor.artist.trim().is_empty() || descriptor.title.trim().is_empty() {
        return Err(ProviderError::NotFound(descriptor.to_string()));
    }
    let wanted = descriptor.artist.trim().to_lowercase();
    let hits = provider.search(descriptor).await?;
    let total = hits.len();
    let mut matching = hits
        .into_iter()
        .enumerate()
        .filter(|(_, t)| t.artist.trim().to_lowercase() == wanted);
    match matching.next() {
        Some((position, mut track)) => {
            if position > 0 || matching.next().is_some() {
                tracing::debug!(%descriptor, position, total, "ambiguous search, took first artist match");
            }
            track.similarity_source_key = Some(descriptor.clone());
            Ok(track)
        }
        None => Err(ProviderError::NotFound(descriptor.to_string())),
    }
}

/// Two-step feature lookup. Both the feature-source id and the features are
/// recorded on `track`.
pub async fn audio_features(
    provider: &dyn CatalogProvider,
    track: &mut Track,
) -> Result<FeatureVector, ProviderError> {
    let source_id = match provider.feature_source_id(&track.canonical_id).await {
        Ok(id) => id,
        Err(ProviderError::NotFound(_)) => {
            return Err(ProviderError::UnmappedTrack(track.canonical_id.clone()))
        }
        Err(e) => return Err(e),
    };
    track.feature_source_id = Some(source_id.clone());
    let features = provider.features_for(&source_id).await?;
    track.features = Some(features);
    Ok(features)
}
