//! Track selection on the valence–energy plane.
//!
//! Three policies share one pool of feature-enriched tracks:
//!
//! - **k nearest neighbours**: deterministic, ranks by *squared* Euclidean
//!   distance to the target and keeps the `k` closest.
//! - **Boltzmann (softmax)**: weights every track by `exp(-d / temperature)`
//!   where `d` is the plain (rooted) Euclidean distance, then samples without
//!   replacement by drawing one index at a time and renormalising over the
//!   remaining tracks.
//! - **Uniform**: the control policy, every subset of size `r` equally likely.
//!
//! Randomness is always passed in by the caller.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Track;
use crate::mood::{check_unit, MoodError, MoodPoint};

/// Default Boltzmann temperature: `exp(-5 d)`.
pub const DEFAULT_TEMPERATURE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("asked for {requested} tracks but the pool holds {available}")]
    InsufficientTracks { requested: usize, available: usize },
    #[error("track {0} has no audio features")]
    MissingFeatures(String),
    #[error("cannot normalize an empty weight list")]
    EmptyWeights,
    #[error("weight {index} is not finite and positive ({value})")]
    NonFiniteWeight { index: usize, value: f64 },
    #[error("invalid selection parameters: {0}")]
    InvalidParams(&'static str),
}

/// Audio features of one track. Same range rules as [`MoodPoint`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeatureVector {
    valence: f64,
    energy: f64,
}

impl FeatureVector {
    pub fn new(valence: f64, energy: f64) -> Result<Self, MoodError> {
        Ok(Self {
            valence: check_unit("valence", valence)?,
            energy: check_unit("energy", energy)?,
        })
    }

    pub fn valence(&self) -> f64 {
        self.valence
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn squared_distance_to(&self, target: MoodPoint) -> f64 {
        let dv = self.valence - target.valence();
        let de = self.energy - target.energy();
        dv * dv + de * de
    }

    pub fn distance_to(&self, target: MoodPoint) -> f64 {
        self.squared_distance_to(target).sqrt()
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            valence: f64,
            energy: f64,
        }
        let raw = Raw::deserialize(de)?;
        FeatureVector::new(raw.valence, raw.energy).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub k_neighbors: usize,
    /// Boltzmann decay constant. Larger values flatten the distribution.
    pub temperature: f64,
    pub r_samples: usize,
    pub rng_seed: u64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            temperature: DEFAULT_TEMPERATURE,
            r_samples: 1,
            rng_seed: 0,
        }
    }
}

impl SelectionParams {
    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.k_neighbors == 0 {
            return Err(SelectionError::InvalidParams("k_neighbors must be at least 1"));
        }
        if self.r_samples == 0 {
            return Err(SelectionError::InvalidParams("r_samples must be at least 1"));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(SelectionError::InvalidParams("temperature must be finite and positive"));
        }
        Ok(())
    }
}

/// A track with the quantities the Boltzmann policy computed for it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrack<'a> {
    pub track: &'a Track,
    pub distance: f64,
    pub weight: f64,
    pub probability: f64,
}

pub fn squared_distances(target: MoodPoint, features: &[FeatureVector]) -> Vec<f64> {
    features.iter().map(|f| f.squared_distance_to(target)).collect()
}

pub fn euclidean_distances(target: MoodPoint, features: &[FeatureVector]) -> Vec<f64> {
    features.iter().map(|f| f.distance_to(target)).collect()
}

pub fn boltzmann_weights(distances: &[f64], temperature: f64) -> Vec<f64> {
    distances.iter().map(|d| (-d / temperature).exp()).collect()
}

pub fn normalize(weights: &[f64]) -> Result<Vec<f64>, SelectionError> {
    if weights.is_empty() {
        return Err(SelectionError::EmptyWeights);
    }
    if let Some((index, &value)) = weights
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(SelectionError::NonFiniteWeight { index, value });
    }
    let z: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| w / z).collect())
}

pub fn features_of(tracks: &[Track]) -> Result<Vec<FeatureVector>, SelectionError> {
    tracks
        .iter()
        .map(|t| {
            t.features
                .ok_or_else(|| SelectionError::MissingFeatures(t.canonical_id.clone()))
        })
        .collect()
}

#[derive(PartialEq)]
struct Ranked {
    distance: f64,
    index: usize,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Indices of the `k` features closest to `target`, nearest first.
/// Equal distances keep input order.
pub fn knn_indices(
    target: MoodPoint,
    k: usize,
    features: &[FeatureVector],
) -> Result<Vec<usize>, SelectionError> {
    if k > features.len() {
        return Err(SelectionError::InsufficientTracks {
            requested: k,
            available: features.len(),
        });
    }
    // Bounded max-heap: the root is the worst of the current best k.
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for (index, distance) in squared_distances(target, features).into_iter().enumerate() {
        heap.push(Ranked { distance, index });
        if heap.len() > k {
            heap.pop();
        }
    }
    Ok(heap.into_sorted_vec().into_iter().map(|r| r.index).collect())
}

pub fn knn_select(
    target: MoodPoint,
    k: usize,
    tracks: &[Track],
) -> Result<Vec<&Track>, SelectionError> {
    let features = features_of(tracks)?;
    Ok(knn_indices(target, k, &features)?
        .into_iter()
        .map(|i| &tracks[i])
        .collect())
}

/// Boltzmann distance, weight and probability for every track, in input order.
pub fn score_tracks<'a>(
    target: MoodPoint,
    temperature: f64,
    tracks: &'a [Track],
) -> Result<Vec<ScoredTrack<'a>>, SelectionError> {
    let features = features_of(tracks)?;
    let distances = euclidean_distances(target, &features);
    let weights = boltzmann_weights(&distances, temperature);
    let nearest = distances.iter().copied().fold(f64::INFINITY, f64::min);
    // Shifted by the nearest distance so the largest term is exactly 1 and
    // the normaliser cannot underflow; far tracks may round to probability 0.
    let shifted: Vec<f64> = distances
        .iter()
        .map(|d| (-(d - nearest) / temperature).exp())
        .collect();
    let z: f64 = shifted.iter().sum();
    if !(z.is_finite() && z > 0.0) {
        return Err(SelectionError::EmptyWeights);
    }
    let probabilities: Vec<f64> = shifted.iter().map(|w| w / z).collect();
    Ok(tracks
        .iter()
        .zip(distances)
        .zip(weights)
        .zip(probabilities)
        .map(|(((track, distance), weight), probability)| ScoredTrack {
            track,
            distance,
            weight,
            probability,
        })
        .collect())
}

/// Draws `r` distinct indices. Each draw picks proportionally to `weights`
/// among the indices not yet drawn.
pub fn sample_without_replacement<R: Rng + ?Sized>(
    weights: &[f64],
    r: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SelectionError> {
    normalize(weights)?;
    let log_weights: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    sample_log_weights(&log_weights, r, rng)
}

/// Same draw-and-renormalise scheme over log-weights. Each draw rescales by
/// the largest remaining log-weight, so sharp distributions (tiny
/// temperatures) never underflow to an all-zero remainder.
fn sample_log_weights<R: Rng + ?Sized>(
    log_weights: &[f64],
    r: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SelectionError> {
    if r > log_weights.len() {
        return Err(SelectionError::InsufficientTracks {
            requested: r,
            available: log_weights.len(),
        });
    }
    let mut remaining: Vec<usize> = (0..log_weights.len()).collect();
    let mut chosen = Vec::with_capacity(r);
    let mut scratch = Vec::with_capacity(remaining.len());
    for _ in 0..r {
        let peak = remaining
            .iter()
            .map(|&i| log_weights[i])
            .fold(f64::NEG_INFINITY, f64::max);
        scratch.clear();
        scratch.extend(remaining.iter().map(|&i| (log_weights[i] - peak).exp()));
        let total: f64 = scratch.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (slot, &w) in scratch.iter().enumerate() {
            if u < w {
                pick = slot;
                break;
            }
            u -= w;
        }
        chosen.push(remaining.remove(pick));
    }
    Ok(chosen)
}

pub fn softmax_indices<R: Rng + ?Sized>(
    target: MoodPoint,
    temperature: f64,
    r: usize,
    features: &[FeatureVector],
    rng: &mut R,
) -> Result<Vec<usize>, SelectionError> {
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(SelectionError::InvalidParams("temperature must be finite and positive"));
    }
    let log_weights: Vec<f64> = euclidean_distances(target, features)
        .into_iter()
        .map(|d| -d / temperature)
        .collect();
    sample_log_weights(&log_weights, r, rng)
}

pub fn softmax_select<'a, R: Rng + ?Sized>(
    target: MoodPoint,
    params: &SelectionParams,
    tracks: &'a [Track],
    rng: &mut R,
) -> Result<Vec<&'a Track>, SelectionError> {
    params.validate()?;
    let features = features_of(tracks)?;
    Ok(
        softmax_indices(target, params.temperature, params.r_samples, &features, rng)?
            .into_iter()
            .map(|i| &tracks[i])
            .collect(),
    )
}

pub fn uniform_indices<R: Rng + ?Sized>(
    n: usize,
    r: usize,
    rng: &mut R,
) -> Result<Vec<usize>, SelectionError> {
    if r > n {
        return Err(SelectionError::InsufficientTracks {
            requested: r,
            available: n,
        });
    }
    Ok(rand::seq::index::sample(rng, n, r).into_vec())
}

pub fn uniform_select<'a, R: Rng + ?Sized>(
    r: usize,
    tracks: &'a [Track],
    rng: &mut R,
) -> Result<Vec<&'a Track>, SelectionError> {
    Ok(uniform_indices(tracks.len(), r, rng)?
        .into_iter()
        .map(|i| &tracks[i])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fv(v: f64, e: f64) -> FeatureVector {
        FeatureVector::new(v, e).unwrap()
    }

    fn mp(v: f64, e: f64) -> MoodPoint {
        MoodPoint::new(v, e).unwrap()
    }

    fn track(id: &str, v: f64, e: f64) -> Track {
        let mut t = Track::new(id, id, "artist");
        t.features = Some(fv(v, e));
        t
    }

    fn seven_songs() -> Vec<Track> {
        [
            ("A", 0.10, 0.17),
            ("B", 0.08, 0.59),
            ("C", 0.21, 0.87),
            ("D", 0.82, 0.74),
            ("E", 0.42, 0.48),
            ("F", 0.51, 0.73),
            ("G", 0.71, 0.44),
        ]
        .iter()
        .map(|&(id, v, e)| track(id, v, e))
        .collect()
    }

    #[test]
    fn squared_distance_examples() {
        let d = squared_distances(mp(0.5, 0.5), &[fv(0.5, 0.5), fv(0.42, 0.48)]);
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 0.0068).abs() < 1e-12);
        assert_eq!(squared_distances(mp(0.0, 0.0), &[fv(1.0, 1.0)]), vec![2.0]);
    }

    #[test]
    fn knn_on_seven_songs() {
        let pool = seven_songs();
        let picked = knn_select(mp(0.5, 0.5), 3, &pool).unwrap();
        let ids: Vec<_> = picked.iter().map(|t| t.canonical_id.as_str()).collect();
        assert_eq!(ids, ["E", "G", "F"]);
    }

    #[test]
    fn knn_exact_hit_and_full_sort() {
        let pool = seven_songs();
        let picked = knn_select(mp(0.82, 0.74), 1, &pool).unwrap();
        assert_eq!(picked[0].canonical_id, "D");

        let all = knn_select(mp(0.5, 0.5), pool.len(), &pool).unwrap();
        assert_eq!(all.len(), 7);
        let d: Vec<f64> = all
            .iter()
            .map(|t| t.features.unwrap().squared_distance_to(mp(0.5, 0.5)))
            .collect();
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn knn_ties_follow_input_order() {
        let pool = vec![track("x", 0.6, 0.5), track("y", 0.4, 0.5), track("z", 0.5, 0.6)];
        let ids: Vec<_> = knn_select(mp(0.5, 0.5), 3, &pool)
            .unwrap()
            .iter()
            .map(|t| t.canonical_id.clone())
            .collect();
        assert_eq!(ids, ["x", "y", "z"]);
    }

    #[test]
    fn knn_rejects_oversized_k_and_missing_features() {
        let pool = seven_songs();
        assert_eq!(
            knn_select(mp(0.5, 0.5), 8, &pool).unwrap_err(),
            SelectionError::InsufficientTracks { requested: 8, available: 7 }
        );
        let bare = vec![Track::new("q", "q", "a")];
        assert_eq!(
            knn_select(mp(0.5, 0.5), 1, &bare).unwrap_err(),
            SelectionError::MissingFeatures("q".into())
        );
    }

    #[test]
    fn boltzmann_weight_examples() {
        assert_eq!(boltzmann_weights(&[0.0], 0.7), vec![1.0]);
        let w = boltzmann_weights(&[0.3, 0.3, 0.3], 0.2);
        assert!(w.iter().all(|x| *x == w[0]));
        let w = boltzmann_weights(&[0.2], 0.2);
        assert!((w[0] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((w[0] - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[1.0; 4]).unwrap(), vec![0.25; 4]);
        assert_eq!(normalize(&[2.0]).unwrap(), vec![1.0]);
        assert_eq!(normalize(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        assert_eq!(normalize(&[]).unwrap_err(), SelectionError::EmptyWeights);
        assert!(matches!(
            normalize(&[1.0, f64::INFINITY]).unwrap_err(),
            SelectionError::NonFiniteWeight { index: 1, .. }
        ));
        assert!(matches!(
            normalize(&[1.0, 0.0]).unwrap_err(),
            SelectionError::NonFiniteWeight { index: 1, .. }
        ));
    }

    #[test]
    fn score_tracks_probabilities_sum_to_one() {
        let pool = seven_songs();
        let scored = score_tracks(mp(0.5, 0.5), DEFAULT_TEMPERATURE, &pool).unwrap();
        let total: f64 = scored.iter().map(|s| s.probability).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let e = scored.iter().find(|s| s.track.canonical_id == "E").unwrap();
        assert!((e.distance - 0.0068f64.sqrt()).abs() < 1e-12);
        assert!((e.weight - (-e.distance / 0.2).exp()).abs() < 1e-15);
    }

    #[test]
    fn softmax_single_track() {
        let pool = vec![track("only", 0.9, 0.1)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = SelectionParams::default();
        let picked = softmax_select(mp(0.2, 0.2), &params, &pool, &mut rng).unwrap();
        assert_eq!(picked[0].canonical_id, "only");
    }

    #[test]
    fn softmax_draws_are_distinct() {
        let pool = seven_songs();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = SelectionParams { r_samples: 7, ..Default::default() };
        let picked = softmax_select(mp(0.5, 0.5), &params, &pool, &mut rng).unwrap();
        let mut ids: Vec<_> = picked.iter().map(|t| t.canonical_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 7);

        let params = SelectionParams { r_samples: 8, ..Default::default() };
        assert!(matches!(
            softmax_select(mp(0.5, 0.5), &params, &pool, &mut rng),
            Err(SelectionError::InsufficientTracks { .. })
        ));
    }

    #[test]
    fn softmax_is_deterministic_per_seed() {
        let pool = seven_songs();
        let params = SelectionParams { r_samples: 3, ..Default::default() };
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            softmax_select(mp(0.3, 0.7), &params, &pool, &mut rng)
                .unwrap()
                .iter()
                .map(|t| t.canonical_id.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
    }

    #[test]
    fn softmax_equal_distance_pair_is_fair() {
        let pool = vec![track("l", 0.4, 0.5), track("r", 0.6, 0.5)];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = SelectionParams::default();
        let trials = 100_000;
        let left = (0..trials)
            .filter(|_| {
                softmax_select(mp(0.5, 0.5), &params, &pool, &mut rng).unwrap()[0].canonical_id
                    == "l"
            })
            .count();
        let freq = left as f64 / trials as f64;
        let se = (0.25 / trials as f64).sqrt();
        assert!((freq - 0.5).abs() < 3.0 * se, "freq {freq}");
    }

    #[test]
    fn uniform_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let one = vec![track("solo", 0.1, 0.1)];
        assert_eq!(uniform_select(1, &one, &mut rng).unwrap()[0].canonical_id, "solo");

        let five: Vec<Track> = (0..5).map(|i| track(&i.to_string(), 0.1, 0.1)).collect();
        let mut ids: Vec<_> = uniform_select(5, &five, &mut rng)
            .unwrap()
            .iter()
            .map(|t| t.canonical_id.clone())
            .collect();
        ids.sort();
        assert_eq!(ids, ["0", "1", "2", "3", "4"]);

        assert!(uniform_select(6, &five, &mut rng).is_err());
    }

    #[test]
    fn uniform_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..trials {
            counts[uniform_indices(10, 1, &mut rng).unwrap()[0]] += 1;
        }
        let se = (0.1 * 0.9 / trials as f64).sqrt();
        for c in counts {
            assert!((c as f64 / trials as f64 - 0.1).abs() < 3.0 * se);
        }
    }

    #[test]
    fn params_validation() {
        assert!(SelectionParams::default().validate().is_ok());
        assert!(SelectionParams { temperature: 0.0, ..Default::default() }.validate().is_err());
        assert!(SelectionParams { k_neighbors: 0, ..Default::default() }.validate().is_err());
        assert!(SelectionParams { r_samples: 0, ..Default::default() }.validate().is_err());
    }
}
