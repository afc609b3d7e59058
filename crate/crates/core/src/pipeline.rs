//! End-to-end recommendation flow for one trial:
//! top tracks → seeds → similar songs → resolved tracks → audio features →
//! candidate pool → blinded control/mood-assisted pair.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::catalog::{
    audio_features, fetch_many, resolve_track, CatalogProvider, FetchPolicy, ProviderError,
    TimeRange, Track, TrackDescriptor,
};
use crate::mood::{target_point, MoodCategory};
use crate::selection::{softmax_select, uniform_select, SelectionError, SelectionParams};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no top tracks to draw seeds from")]
    EmptyTaste,
    #[error("candidate pool holds {size} tracks, need at least {required}")]
    PoolTooSmall { size: usize, required: usize },
    #[error("pool of {0} tracks cannot supply two distinct recommendations")]
    InsufficientPool(usize),
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_seeds: usize,
    pub similar_per_seed: usize,
    pub time_range: TimeRange,
    /// How many top tracks to request before drawing seeds.
    pub top_limit: usize,
    pub selection: SelectionParams,
    pub pool_min: usize,
    pub fetch: FetchPolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_seeds: 5,
            similar_per_seed: 10,
            time_range: TimeRange::Medium,
            top_limit: 50,
            selection: SelectionParams::default(),
            pool_min: 10,
            fetch: FetchPolicy::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.n_seeds == 0 {
            return Err(PipelineError::InvalidConfig("n_seeds must be at least 1"));
        }
        if self.similar_per_seed == 0 {
            return Err(PipelineError::InvalidConfig("similar_per_seed must be at least 1"));
        }
        if self.pool_min < 2 {
            return Err(PipelineError::InvalidConfig("pool_min must be at least 2"));
        }
        if self.fetch.max_in_flight == 0 {
            return Err(PipelineError::InvalidConfig("max_in_flight must be at least 1"));
        }
        if !(self.fetch.per_provider_rate.is_finite() && self.fetch.per_provider_rate > 0.0) {
            return Err(PipelineError::InvalidConfig("per_provider_rate must be positive"));
        }
        self.selection.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub tracks: Vec<Track>,
    /// Candidates dropped because a provider had no data for them.
    pub excluded_count: usize,
    pub seed_ids: HashSet<String>,
}

impl CandidatePool {
    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Control => "control",
            Arm::Treatment => "treatment",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresentationOrder {
    ControlFirst,
    TreatmentFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlindLabel {
    A,
    B,
}

impl BlindLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BlindLabel::A => "A",
            BlindLabel::B => "B",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "A" | "a" => Some(BlindLabel::A),
            "B" | "b" => Some(BlindLabel::B),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationPair {
    pub pair_id: Uuid,
    pub control: Track,
    pub treatment: Track,
    pub mood: MoodCategory,
    pub presentation_order: PresentationOrder,
}

impl RecommendationPair {
    /// Label A is whichever arm is presented first.
    pub fn arm_for(&self, label: BlindLabel) -> Arm {
        match (self.presentation_order, label) {
            (PresentationOrder::ControlFirst, BlindLabel::A)
            | (PresentationOrder::TreatmentFirst, BlindLabel::B) => Arm::Control,
            _ => Arm::Treatment,
        }
    }

    pub fn label_for(&self, arm: Arm) -> BlindLabel {
        if self.arm_for(BlindLabel::A) == arm {
            BlindLabel::A
        } else {
            BlindLabel::B
        }
    }

    pub fn track_for(&self, arm: Arm) -> &Track {
        match arm {
            Arm::Control => &self.control,
            Arm::Treatment => &self.treatment,
        }
    }

    /// Tracks in presentation order with their labels.
    pub fn presented(&self) -> [(BlindLabel, &Track); 2] {
        [BlindLabel::A, BlindLabel::B].map(|l| (l, self.track_for(self.arm_for(l))))
    }
}

pub fn select_seeds<R: Rng + ?Sized>(
    top_tracks: &[Track],
    n_seeds: usize,
    rng: &mut R,
) -> Result<Vec<Track>, PipelineError> {
    if top_tracks.is_empty() {
        return Err(PipelineError::EmptyTaste);
    }
    let n = n_seeds.min(top_tracks.len());
    Ok(rand::seq::index::sample(rng, top_tracks.len(), n)
        .into_iter()
        .map(|i| top_tracks[i].clone())
        .collect())
}

fn keep_or_skip<T>(
    result: Result<T, ProviderError>,
    excluded: &mut usize,
) -> Result<Option<T>, ProviderError> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_missing_data() => {
            *excluded += 1;
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

pub async fn build_candidate_pool(
    seeds: &[Track],
    provider: &dyn CatalogProvider,
    config: &PipelineConfig,
) -> Result<CandidatePool, PipelineError> {
    config.validate()?;
    if seeds.is_empty() {
        return Err(PipelineError::EmptyTaste);
    }
    let seed_ids: HashSet<String> = seeds.iter().map(|s| s.canonical_id.clone()).collect();
    let policy = &config.fetch;

    let similar = fetch_many(seeds.to_vec(), policy, |seed| async move {
        provider.similar_tracks(&seed, config.similar_per_seed).await
    })
    .await;
    let mut descriptors: Vec<TrackDescriptor> = Vec::new();
    let mut seen_descriptors = HashSet::new();
    for keyed in similar {
        match keyed.result {
            Ok(list) => {
                for d in list {
                    if seen_descriptors.insert(d.normalized_key()) {
                        descriptors.push(d);
                    }
                }
            }
            Err(ProviderError::NotFound(_)) => {
                tracing::debug!(seed = %keyed.key.canonical_id, "seed unknown to similarity source");
            }
            Err(e) => return Err(e.into()),
        }
    }

    let mut excluded = 0;
    let resolved = fetch_many(descriptors, policy, |d| async move {
        resolve_track(provider, &d).await
    })
    .await;
    let mut candidates = Vec::new();
    let mut seen_ids = HashSet::new();
    for keyed in resolved {
        if let Some(track) = keep_or_skip(keyed.result, &mut excluded)? {
            if !seed_ids.contains(&track.canonical_id) && seen_ids.insert(track.canonical_id.clone())
            {
                candidates.push(track);
            }
        }
    }

    let enriched = fetch_many(candidates, policy, |mut track| async move {
        audio_features(provider, &mut track).await.map(|_| track)
    })
    .await;
    let mut tracks = Vec::new();
    for keyed in enriched {
        if let Some(track) = keep_or_skip(keyed.result, &mut excluded)? {
            tracks.push(track);
        }
    }

    if excluded > 0 {
        tracing::info!(excluded, "candidates dropped for missing provider data");
    }
    if tracks.len() < config.pool_min {
        return Err(PipelineError::PoolTooSmall {
            size: tracks.len(),
            required: config.pool_min,
        });
    }
    Ok(CandidatePool {
        tracks,
        excluded_count: excluded,
        seed_ids,
    })
}

/// Draws the mood-assisted track by Boltzmann sampling toward the mood's
/// target point, then the control track uniformly from the rest of the pool,
/// then a fair coin for presentation order.
pub fn generate_pair<R: Rng + ?Sized>(
    pool: &CandidatePool,
    mood: MoodCategory,
    config: &PipelineConfig,
    rng: &mut R,
) -> Result<RecommendationPair, PipelineError> {
    if pool.tracks.len() < 2 {
        return Err(PipelineError::InsufficientPool(pool.tracks.len()));
    }
    let params = SelectionParams {
        r_samples: 1,
        ..config.selection
    };
    let treatment = softmax_select(target_point(mood), &params, &pool.tracks, rng)?[0].clone();
    let rest: Vec<Track> = pool
        .tracks
        .iter()
        .filter(|t| t.canonical_id != treatment.canonical_id)
        .cloned()
        .collect();
    let control = uniform_select(1, &rest, rng)?[0].clone();
    let presentation_order = if rng.random_bool(0.5) {
        PresentationOrder::TreatmentFirst
    } else {
        PresentationOrder::ControlFirst
    };
    let pair_id = uuid::Builder::from_random_bytes(rng.random()).into_uuid();
    Ok(RecommendationPair {
        pair_id,
        control,
        treatment,
        mood,
        presentation_order,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::FeatureVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tracks(n: usize) -> Vec<Track> {
        (0..n)
            .map(|i| {
                let mut t = Track::new(format!("t{i}"), format!("Song {i}"), "Artist");
                t.features = Some(FeatureVector::new(i as f64 / n as f64, 0.5).unwrap());
                t
            })
            .collect()
    }

    fn pool(n: usize) -> CandidatePool {
        CandidatePool {
            tracks: tracks(n),
            excluded_count: 0,
            seed_ids: HashSet::new(),
        }
    }

    #[test]
    fn seeds_clamp_and_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let three = tracks(3);
        let mut got: Vec<_> = select_seeds(&three, 5, &mut rng)
            .unwrap()
            .into_iter()
            .map(|t| t.canonical_id)
            .collect();
        got.sort();
        assert_eq!(got, ["t0", "t1", "t2"]);
        assert_eq!(select_seeds(&tracks(10), 10, &mut rng).unwrap().len(), 10);
        assert!(matches!(select_seeds(&[], 5, &mut rng), Err(PipelineError::EmptyTaste)));
    }

    #[test]
    fn seeds_are_deterministic() {
        let top = tracks(50);
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            select_seeds(&top, 5, &mut rng).unwrap()
        };
        let first = draw();
        assert_eq!(first, draw());
        let ids: HashSet<_> = first.iter().map(|t| &t.canonical_id).collect();
        assert_eq!(ids.len(), 5);
    }

    #[test]
    fn pair_of_two() {
        let p = pool(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pair = generate_pair(&p, MoodCategory::Happy, &PipelineConfig::default(), &mut rng).unwrap();
        let mut ids = [pair.control.canonical_id.clone(), pair.treatment.canonical_id.clone()];
        ids.sort();
        assert_eq!(ids, ["t0", "t1"]);
        assert!(matches!(
            generate_pair(&pool(1), MoodCategory::Happy, &PipelineConfig::default(), &mut rng),
            Err(PipelineError::InsufficientPool(1))
        ));
    }

    #[test]
    fn pair_is_deterministic() {
        let p = pool(20);
        let make = || {
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            generate_pair(&p, MoodCategory::Relaxed, &PipelineConfig::default(), &mut rng).unwrap()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn labels_form_a_bijection() {
        let p = pool(10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let pair = generate_pair(&p, MoodCategory::Sad, &PipelineConfig::default(), &mut rng).unwrap();
            assert_ne!(pair.control.canonical_id, pair.treatment.canonical_id);
            assert_ne!(pair.arm_for(BlindLabel::A), pair.arm_for(BlindLabel::B));
            for arm in [Arm::Control, Arm::Treatment] {
                assert_eq!(pair.arm_for(pair.label_for(arm)), arm);
            }
            let [(la, first), (lb, _)] = pair.presented();
            assert_eq!((la, lb), (BlindLabel::A, BlindLabel::B));
            let expect_first = match pair.presentation_order {
                PresentationOrder::ControlFirst => &pair.control,
                PresentationOrder::TreatmentFirst => &pair.treatment,
            };
            assert_eq!(first, expect_first);
        }
    }

    #[test]
    fn presentation_coin_is_fair() {
        let p = pool(10);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let trials = 10_000;
        let first = (0..trials)
            .filter(|_| {
                generate_pair(&p, MoodCategory::Neutral, &PipelineConfig::default(), &mut rng)
                    .unwrap()
                    .presentation_order
                    == PresentationOrder::TreatmentFirst
            })
            .count();
        let se = (0.25 / trials as f64).sqrt();
        assert!((first as f64 / trials as f64 - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig { pool_min: 1, ..Default::default() };
        assert!(matches!(bad.validate(), Err(PipelineError::InvalidConfig(_))));
        let bad = PipelineConfig { n_seeds: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
