//! Offline catalog backed by a single JSON document.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "top_tracks": ["t-a"],
//!   "tracks":     [{"canonical_id": "t-a", "title": "…", "artist": "…",
//!                   "feature_source_id": "rb-a", "valence": 0.1, "energy": 0.17}],
//!   "similarity": [{"seed_id": "t-a", "related": [["Artist", "Title"]]}],
//!   "search":     [{"artist": "Artist", "title": "Title", "canonical_id": "t-b"}]
//! }
//! ```
//!
//! `top_tracks` is optional; without it every track row counts as a top
//! track, in file order. Features are read from the track rows.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CatalogProvider, ProviderError, TimeRange, Track, TrackDescriptor, UserSession};
use crate::selection::FeatureVector;

pub const FIXTURE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation in {}: {}", .0[0].location, .0[0].message)]
    Schema(Vec<Violation>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Row reference such as `tracks[3]`.
    pub location: String,
    pub field: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub canonical_id: String,
    pub title: String,
    pub artist: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_source_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub seed_id: String,
    /// `(artist, title)` pairs, most similar first.
    pub related: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    pub artist: String,
    pub title: String,
    pub canonical_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureDocument {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_tracks: Option<Vec<String>>,
    pub tracks: Vec<TrackRow>,
    #[serde(default)]
    pub similarity: Vec<SimilarityRow>,
    #[serde(default)]
    pub search: Vec<SearchRow>,
}

/// Counts and every schema violation found in a document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureReport {
    pub tracks: usize,
    pub similarity: usize,
    pub search: usize,
    pub features: usize,
    pub violations: Vec<Violation>,
}

impl FixtureDocument {
    pub fn parse(text: &str) -> Result<Self, FixtureError> {
        serde_json::from_str(text).map_err(|e| FixtureError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn report(&self) -> FixtureReport {
        let mut violations = Vec::new();
        let mut push = |location: String, field: &'static str, message: String| {
            violations.push(Violation { location, field, message })
        };

        if self.schema_version != FIXTURE_SCHEMA_VERSION {
            push(
                "document".into(),
                "schema_version",
                format!(
                    "unsupported schema_version {} (expected {FIXTURE_SCHEMA_VERSION})",
                    self.schema_version
                ),
            );
        }

        let mut ids = HashSet::new();
        let mut feature_ids = HashSet::new();
        for (i, row) in self.tracks.iter().enumerate() {
            let at = format!("tracks[{i}] ({})", row.canonical_id);
            if row.canonical_id.trim().is_empty() {
                push(at.clone(), "canonical_id", "canonical_id is empty".into());
            } else if !ids.insert(row.canonical_id.as_str()) {
                push(at.clone(), "canonical_id", "duplicate canonical_id".into());
            }
            if row.title.trim().is_empty() {
                push(at.clone(), "title", "title is empty".into());
            }
            if row.artist.trim().is_empty() {
                push(at.clone(), "artist", "artist is empty".into());
            }
            for (field, value) in [("valence", row.valence), ("energy", row.energy)] {
                if let Some(v) = value {
                    if !(0.0..=1.0).contains(&v) {
                        push(at.clone(), field, format!("{field} {v} outside [0, 1]"));
                    }
                }
            }
            if row.valence.is_some() != row.energy.is_some() {
                push(at.clone(), "energy", "valence and energy must be given together".into());
            }
            if let Some(fid) = &row.feature_source_id {
                if fid.trim().is_empty() {
                    push(at.clone(), "feature_source_id", "feature_source_id is empty".into());
                } else if !feature_ids.insert(fid.as_str()) {
                    push(at, "feature_source_id", "duplicate feature_source_id".into());
                }
            }
        }

        for (i, id) in self.top_tracks.iter().flatten().enumerate() {
            if !ids.contains(id.as_str()) {
                push(format!("top_tracks[{i}]"), "top_tracks", format!("unknown track {id}"));
            }
        }
        for (i, row) in self.similarity.iter().enumerate() {
            let at = format!("similarity[{i}] ({})", row.seed_id);
            if !ids.contains(row.seed_id.as_str()) {
                push(at.clone(), "seed_id", format!("unknown track {}", row.seed_id));
            }
            for (j, (artist, title)) in row.related.iter().enumerate() {
                if artist.trim().is_empty() || title.trim().is_empty() {
                    push(format!("{at}.related[{j}]"), "related", "artist and title are required".into());
                }
            }
        }
        for (i, row) in self.search.iter().enumerate() {
            let at = format!("search[{i}]");
            if row.canonical_id.trim().is_empty() {
                push(at.clone(), "canonical_id", "canonical_id is empty".into());
            }
            if row.artist.trim().is_empty() || row.title.trim().is_empty() {
                push(at, "title", "artist and title are required".into());
            }
        }

        FixtureReport {
            tracks: self.tracks.len(),
            similarity: self.similarity.len(),
            search: self.search.len(),
            features: self
                .tracks
                .iter()
                .filter(|r| r.feature_source_id.is_some() && r.valence.is_some() && r.energy.is_some())
                .count(),
            violations,
        }
    }
}

/// In-memory provider answering every catalog call from a fixture document.
#[derive(Debug, Clone)]
pub struct FixtureCatalog {
    top: Vec<Track>,
    similarity: HashMap<String, Vec<TrackDescriptor>>,
    search: Vec<(String, Track)>,
    feature_ids: HashMap<String, String>,
    features: HashMap<String, Option<FeatureVector>>,
}

impl FixtureCatalog {
    pub fn from_document(doc: &FixtureDocument) -> Result<Self, FixtureError> {
        let report = doc.report();
        if !report.violations.is_empty() {
            return Err(FixtureError::Schema(report.violations));
        }
        let bare = |row: &TrackRow| Track::new(&row.canonical_id, &row.title, &row.artist);
        let by_id: HashMap<&str, &TrackRow> =
            doc.tracks.iter().map(|r| (r.canonical_id.as_str(), r)).collect();
        let top = match &doc.top_tracks {
            Some(ids) => ids.iter().map(|id| bare(by_id[id.as_str()])).collect(),
            None => doc.tracks.iter().map(bare).collect(),
        };
        let similarity = doc
            .similarity
            .iter()
            .map(|row| {
                let related = row
                    .related
                    .iter()
                    .map(|(artist, title)| TrackDescriptor::new(artist, title))
                    .collect();
                (row.seed_id.clone(), related)
            })
            .collect();
        let search = doc
            .search
            .iter()
            .map(|row| {
                (
                    row.title.trim().to_lowercase(),
                    Track::new(&row.canonical_id, &row.title, &row.artist),
                )
            })
            .collect();
        let mut feature_ids = HashMap::new();
        let mut features = HashMap::new();
        for row in &doc.tracks {
            if let Some(fid) = &row.feature_source_id {
                feature_ids.insert(row.canonical_id.clone(), fid.clone());
                let fv = match (row.valence, row.energy) {
                    (Some(v), Some(e)) => Some(
                        FeatureVector::new(v, e).expect("ranges checked by report()"),
                    ),
                    _ => None,
                };
                features.insert(fid.clone(), fv);
            }
        }
        Ok(Self {
            top,
            similarity,
            search,
            feature_ids,
            features,
        })
    }

    pub fn top_track_count(&self) -> usize {
        self.top.len()
    }
}

pub fn parse_fixture_catalog(text: &str) -> Result<FixtureCatalog, FixtureError> {
    FixtureCatalog::from_document(&FixtureDocument::parse(text)?)
}

pub fn load_fixture_catalog(path: impl AsRef<Path>) -> Result<FixtureCatalog, FixtureError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_fixture_catalog(&text)
}

#[async_trait]
impl CatalogProvider for FixtureCatalog {
    async fn top_tracks(
        &self,
        _session: &UserSession,
        _range: TimeRange,
        limit: usize,
    ) -> Result<Vec<Track>, ProviderError> {
        Ok(self.top.iter().take(limit).cloned().collect())
    }

    async fn similar_tracks(
        &self,
        seed: &Track,
        limit: usize,
    ) -> Result<Vec<TrackDescriptor>, ProviderError> {
        let related = self
            .similarity
            .get(&seed.canonical_id)
            .ok_or_else(|| ProviderError::NotFound(seed.descriptor().to_string()))?;
        let own = seed.descriptor();
        Ok(related
            .iter()
            .filter(|d| !d.same_song(&own))
            .take(limit)
            .cloned()
            .collect())
    }

    async fn search(&self, descriptor: &TrackDescriptor) -> Result<Vec<Track>, ProviderError> {
        let title = descriptor.title.trim().to_lowercase();
        Ok(self
            .search
            .iter()
            .filter(|(t, _)| *t == title)
            .map(|(_, track)| track.clone())
            .collect())
    }

    async fn feature_source_id(&self, canonical_id: &str) -> Result<String, ProviderError> {
        self.feature_ids
            .get(canonical_id)
            .cloned()
            .ok_or_else(|| ProviderError::UnmappedTrack(canonical_id.to_string()))
    }

    async fn features_for(&self, feature_source_id: &str) -> Result<FeatureVector, ProviderError> {
        self.features
            .get(feature_source_id)
            .copied()
            .flatten()
            .ok_or_else(|| ProviderError::NotFound(format!("features for {feature_source_id}")))
    }
}
