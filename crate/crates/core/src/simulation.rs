//! Offline runs of the pair generator, summarised per arm.

use rand::Rng;
use serde::Serialize;

use crate::mood::{target_point, MoodCategory, MoodPoint};
use crate::pipeline::{generate_pair, CandidatePool, PipelineConfig, PipelineError, PresentationOrder};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackFrequency {
    pub canonical_id: String,
    pub title: String,
    pub artist: String,
    pub distance: f64,
    pub treatment_count: usize,
    pub control_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub mood: MoodCategory,
    pub target: MoodPoint,
    pub trials: usize,
    pub pool_size: usize,
    pub excluded_count: usize,
    /// `None` when no trials ran.
    pub treatment_mean_distance: Option<f64>,
    pub control_mean_distance: Option<f64>,
    pub treatment_first_rate: Option<f64>,
    /// Pool order.
    pub frequencies: Vec<TrackFrequency>,
}

impl SimulationReport {
    /// Control mean distance minus treatment mean distance.
    pub fn distance_gap(&self) -> Option<f64> {
        Some(self.control_mean_distance? - self.treatment_mean_distance?)
    }
}

pub fn simulate_pairs<R: Rng + ?Sized>(
    pool: &CandidatePool,
    mood: MoodCategory,
    config: &PipelineConfig,
    trials: usize,
    rng: &mut R,
) -> Result<SimulationReport, PipelineError> {
    let target = target_point(mood);
    let distance = |i: usize| {
        pool.tracks[i]
            .features
            .map_or(f64::NAN, |f| f.distance_to(target))
    };
    let index_of: std::collections::HashMap<&str, usize> = pool
        .tracks
        .iter()
        .enumerate()
        .map(|(i, t)| (t.canonical_id.as_str(), i))
        .collect();

    let mut treatment_counts = vec![0usize; pool.len()];
    let mut control_counts = vec![0usize; pool.len()];
    let (mut treatment_sum, mut control_sum, mut treatment_first) = (0.0, 0.0, 0usize);
    for _ in 0..trials {
        let pair = generate_pair(pool, mood, config, rng)?;
        let t = index_of[pair.treatment.canonical_id.as_str()];
        let c = index_of[pair.control.canonical_id.as_str()];
        treatment_counts[t] += 1;
        control_counts[c] += 1;
        treatment_sum += distance(t);
        control_sum += distance(c);
        if pair.presentation_order == PresentationOrder::TreatmentFirst {
            treatment_first += 1;
        }
    }

    let mean = |sum: f64| (trials > 0).then(|| sum / trials as f64);
    Ok(SimulationReport {
        mood,
        target,
        trials,
        pool_size: pool.len(),
        excluded_count: pool.excluded_count,
        treatment_mean_distance: mean(treatment_sum),
        control_mean_distance: mean(control_sum),
        treatment_first_rate: mean(treatment_first as f64),
        frequencies: pool
            .tracks
            .iter()
            .enumerate()
            .map(|(i, t)| TrackFrequency {
                canonical_id: t.canonical_id.clone(),
                title: t.title.clone(),
                artist: t.artist.clone(),
                distance: distance(i),
                treatment_count: treatment_counts[i],
                control_count: control_counts[i],
            })
            .collect(),
    })
}
