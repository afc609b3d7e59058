//! Rating analysis: histograms, means, tied midranks, rank sums and the
//! Mann-Whitney normal approximation.
//!
//! Two ranking modes are offered. [`RankingMode::BestFirst`] ranks the
//! combined sample with rating 5 at position 1 and uses the untied variance
//! `n1 n2 (N + 1) / 12`; the z statistic is the distance of the minimum rank
//! sum from its expectation. [`RankingMode::TieCorrected`] ranks ascending
//! and shrinks the variance by the usual `Σ(t³ − t) / (N (N − 1))` tie term.
//! Neither applies a continuity correction.
//!
//! `z` is always reported oriented to the treatment group, so swapping the
//! groups negates it. Its magnitude equals the minimum-rank-sum statistic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::mood::MoodCategory;
use crate::pipeline::Arm;
use crate::store::ExportRow;

pub const RATING_LEVELS: std::ops::RangeInclusive<u8> = 1..=5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("rating {0} is outside 1..=5")]
    OutOfRange(u8),
    #[error("cannot take the mean of an empty list")]
    EmptyInput,
    #[error("the {0} group has no ratings")]
    EmptyGroup(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingMode {
    #[default]
    BestFirst,
    TieCorrected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSample {
    pub control: Vec<u8>,
    pub treatment: Vec<u8>,
}

impl RatingSample {
    pub fn new(control: Vec<u8>, treatment: Vec<u8>) -> Result<Self, StatsError> {
        for &r in control.iter().chain(&treatment) {
            if !RATING_LEVELS.contains(&r) {
                return Err(StatsError::OutOfRange(r));
            }
        }
        Ok(Self { control, treatment })
    }

    /// Expands per-level counts (ratings 1..=5) into a sample.
    pub fn from_histograms(control: [usize; 5], treatment: [usize; 5]) -> Self {
        let expand = |h: [usize; 5]| {
            h.iter()
                .enumerate()
                .flat_map(|(i, &n)| std::iter::repeat_n(i as u8 + 1, n))
                .collect::<Vec<_>>()
        };
        Self {
            control: expand(control),
            treatment: expand(treatment),
        }
    }

    pub fn from_rows(rows: &[ExportRow]) -> Self {
        let pick = |arm| rows.iter().filter(|r| r.arm == arm).map(|r| r.rating).collect();
        Self {
            control: pick(Arm::Control),
            treatment: pick(Arm::Treatment),
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            control: self.treatment.clone(),
            treatment: self.control.clone(),
        }
    }

    pub fn total(&self) -> usize {
        self.control.len() + self.treatment.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UTestResult {
    pub mode: RankingMode,
    pub n_control: usize,
    pub n_treatment: usize,
    pub rank_sum_control: f64,
    pub rank_sum_treatment: f64,
    /// Expected rank sum of the group holding the smaller rank sum.
    pub mu_rank: f64,
    pub sigma: f64,
    pub z: f64,
    pub p_two_tailed: f64,
    /// Smaller of the two Mann-Whitney U statistics.
    pub u_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoodMeans {
    pub mood: MoodCategory,
    pub control_mean: Option<f64>,
    pub treatment_mean: Option<f64>,
    pub control_n: usize,
    pub treatment_n: usize,
}

/// Counts per rating, index 0 holding rating 1.
pub fn histogram(ratings: &[u8]) -> Result<[usize; 5], StatsError> {
    let mut counts = [0; 5];
    for &r in ratings {
        if !RATING_LEVELS.contains(&r) {
            return Err(StatsError::OutOfRange(r));
        }
        counts[usize::from(r) - 1] += 1;
    }
    Ok(counts)
}

pub fn mean_rating(ratings: &[u8]) -> Result<f64, StatsError> {
    if ratings.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    Ok(ratings.iter().map(|&r| f64::from(r)).sum::<f64>() / ratings.len() as f64)
}

fn levels_in_rank_order(mode: RankingMode) -> [u8; 5] {
    match mode {
        RankingMode::BestFirst => [5, 4, 3, 2, 1],
        RankingMode::TieCorrected => [1, 2, 3, 4, 5],
    }
}

fn combined_counts(sample: &RatingSample) -> [usize; 5] {
    let mut counts = [0; 5];
    for &r in sample.control.iter().chain(&sample.treatment) {
        counts[usize::from(r) - 1] += 1;
    }
    counts
}

/// Midrank of every rating level present in the combined sample.
pub fn midranks(sample: &RatingSample, mode: RankingMode) -> BTreeMap<u8, f64> {
    let counts = combined_counts(sample);
    let mut ranks = BTreeMap::new();
    let mut occupied = 0usize;
    for level in levels_in_rank_order(mode) {
        let n = counts[usize::from(level) - 1];
        if n == 0 {
            continue;
        }
        let first = occupied + 1;
        let last = occupied + n;
        ranks.insert(level, (first + last) as f64 / 2.0);
        occupied = last;
    }
    ranks
}

/// `(control, treatment)` sums of midranks.
pub fn rank_sums(sample: &RatingSample, mode: RankingMode) -> (f64, f64) {
    let ranks = midranks(sample, mode);
    let sum = |group: &[u8]| group.iter().map(|r| ranks[r]).sum::<f64>();
    (sum(&sample.control), sum(&sample.treatment))
}

/// Two-tailed standard normal tail probability `P(|Z| ≥ |z|)`.
pub fn normal_two_tailed(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

pub fn mann_whitney(sample: &RatingSample, mode: RankingMode) -> Result<UTestResult, StatsError> {
    if sample.control.is_empty() {
        return Err(StatsError::EmptyGroup("control"));
    }
    if sample.treatment.is_empty() {
        return Err(StatsError::EmptyGroup("treatment"));
    }
    let n_c = sample.control.len() as f64;
    let n_t = sample.treatment.len() as f64;
    let n = n_c + n_t;
    let (sum_c, sum_t) = rank_sums(sample, mode);

    let n_min = if sum_t <= sum_c { n_t } else { n_c };
    let mu_rank = n_min * (n + 1.0) / 2.0;

    let untied = n_c * n_t * (n + 1.0) / 12.0;
    let variance = match mode {
        RankingMode::BestFirst => untied,
        RankingMode::TieCorrected => {
            let ties: f64 = combined_counts(sample)
                .iter()
                .map(|&t| {
                    let t = t as f64;
                    t * t * t - t
                })
                .sum();
            n_c * n_t / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)))
        }
    };
    let sigma = variance.max(0.0).sqrt();

    let deviation = sum_t - n_t * (n + 1.0) / 2.0;
    let (z, p) = if sigma > 0.0 {
        let z = deviation / sigma;
        (z, normal_two_tailed(z))
    } else {
        (0.0, 1.0)
    };

    let u_c = sum_c - n_c * (n_c + 1.0) / 2.0;
    let u_t = sum_t - n_t * (n_t + 1.0) / 2.0;

    Ok(UTestResult {
        mode,
        n_control: sample.control.len(),
        n_treatment: sample.treatment.len(),
        rank_sum_control: sum_c,
        rank_sum_treatment: sum_t,
        mu_rank,
        sigma,
        z,
        p_two_tailed: p,
        u_min: u_c.min(u_t),
    })
}

/// Per-mood arithmetic means by arm. Moods without any rating are omitted.
pub fn mean_by_mood(rows: &[ExportRow]) -> Vec<MoodMeans> {
    MoodCategory::ALL
        .into_iter()
        .filter_map(|mood| {
            let ratings = |arm| -> Vec<u8> {
                rows.iter()
                    .filter(|r| r.mood == mood && r.arm == arm)
                    .map(|r| r.rating)
                    .collect()
            };
            let control = ratings(Arm::Control);
            let treatment = ratings(Arm::Treatment);
            if control.is_empty() && treatment.is_empty() {
                return None;
            }
            Some(MoodMeans {
                mood,
                control_mean: mean_rating(&control).ok(),
                treatment_mean: mean_rating(&treatment).ok(),
                control_n: control.len(),
                treatment_n: treatment.len(),
            })
        })
        .collect()
}
