//! Rating analysis: histograms, means, the rank-sum test in both ranking
//! modes, and per-mood means.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use moodtune_core::stats::{histogram, mean_by_mood, mean_rating, midranks, MoodMeans};
use moodtune_core::{mann_whitney, ExportRow, RankingMode, RatingSample, UTestResult};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    /// Counts of ratings 1 through 5.
    pub histogram: [usize; 5],
    pub n: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankTest {
    /// Midrank per rating level present.
    pub midranks: BTreeMap<u8, f64>,
    #[serde(flatten)]
    pub result: UTestResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub control: GroupSummary,
    pub treatment: GroupSummary,
    pub best_first: RankTest,
    pub tie_corrected: RankTest,
    /// Empty when the input carries no moods.
    pub moods: Vec<MoodMeans>,
}

fn group(ratings: &[u8]) -> Result<GroupSummary, CliError> {
    Ok(GroupSummary {
        histogram: histogram(ratings)?,
        n: ratings.len(),
        mean: mean_rating(ratings)?,
    })
}

fn rank_test(sample: &RatingSample, mode: RankingMode) -> Result<RankTest, CliError> {
    Ok(RankTest {
        midranks: midranks(sample, mode),
        result: mann_whitney(sample, mode)?,
    })
}

impl AnalysisReport {
    pub fn from_sample(sample: &RatingSample) -> Result<Self, CliError> {
        // The test reports which group is empty; check it before the means do.
        let best_first = rank_test(sample, RankingMode::BestFirst)?;
        Ok(Self {
            control: group(&sample.control)?,
            treatment: group(&sample.treatment)?,
            best_first,
            tie_corrected: rank_test(sample, RankingMode::TieCorrected)?,
            moods: Vec::new(),
        })
    }

    pub fn from_rows(rows: &[ExportRow]) -> Result<Self, CliError> {
        let mut report = Self::from_sample(&RatingSample::from_rows(rows))?;
        report.moods = mean_by_mood(rows);
        Ok(report)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>4} {:>4} {:>4} {:>4} {:>4} {:>6} {:>8}", "rating", 1, 2, 3, 4, 5, "n", "mean");
        for (name, g) in [("control", &self.control), ("treatment", &self.treatment)] {
            let h = g.histogram;
            let _ = writeln!(
                s,
                "{name:<10} {:>4} {:>4} {:>4} {:>4} {:>4} {:>6} {:>8.4}",
                h[0], h[1], h[2], h[3], h[4], g.n, g.mean
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<22} {:>14} {:>14}", "rank-sum test", "best-first", "tie-corrected");
        for level in (1..=5u8).rev() {
            let cell = |t: &RankTest| t.midranks.get(&level).map_or("-".to_string(), |r| format!("{r}"));
            let _ = writeln!(
                s,
                "{:<22} {:>14} {:>14}",
                format!("midrank of {level}"),
                cell(&self.best_first),
                cell(&self.tie_corrected)
            );
        }
        let (a, b) = (&self.best_first.result, &self.tie_corrected.result);
        let rows: [(&str, f64, f64, usize); 7] = [
            ("rank sum control", a.rank_sum_control, b.rank_sum_control, 1),
            ("rank sum treatment", a.rank_sum_treatment, b.rank_sum_treatment, 1),
            ("expected rank sum", a.mu_rank, b.mu_rank, 1),
            ("sigma", a.sigma, b.sigma, 4),
            ("z", a.z, b.z, 4),
            ("p (two-tailed)", a.p_two_tailed, b.p_two_tailed, 5),
            ("U (smaller)", a.u_min, b.u_min, 1),
        ];
        for (name, x, y, places) in rows {
            let _ = writeln!(s, "{name:<22} {x:>14.places$} {y:>14.places$}");
        }
        if !self.moods.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "{:<12} {:>8} {:>10} {:>6} {:>6}", "mood", "control", "treatment", "n_c", "n_t");
            let show = |m: Option<f64>| m.map_or("-".to_string(), |v| format!("{v:.2}"));
            for m in &self.moods {
                let _ = writeln!(
                    s,
                    "{:<12} {:>8} {:>10} {:>6} {:>6}",
                    m.mood.label(),
                    show(m.control_mean),
                    show(m.treatment_mean),
                    m.control_n,
                    m.treatment_n
                );
            }
        }
        s
    }
}

/// Parses five comma-separated counts for ratings 1 through 5.
pub fn parse_counts(text: &str) -> Result<[usize; 5], CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 5 {
        return Err(CliError::Validation(format!(
            "expected five counts for ratings 1 to 5, got {:?}",
            text
        )));
    }
    let mut counts = [0; 5];
    for (slot, part) in counts.iter_mut().zip(parts) {
        *slot = part
            .parse()
            .map_err(|_| CliError::Validation(format!("bad count {part:?}")))?;
    }
    Ok(counts)
}
