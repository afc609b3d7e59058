//! Offline pair generation against a fixture catalog.

use std::fmt::Write as _;
use std::path::Path;

use moodtune_core::catalog::{load_fixture_catalog, UserSession};
use moodtune_core::{
    build_candidate_pool, select_seeds, simulate_pairs, CatalogProvider, FetchPolicy, MoodCategory,
    PipelineConfig, SimulationReport,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;

/// Draws seeds from the fixture's top tracks, builds one pool, and runs
/// `trials` pairs on it. The same seed gives the same report.
pub async fn simulate(
    fixture: &Path,
    mood: MoodCategory,
    trials: usize,
    seed: u64,
) -> Result<SimulationReport, CliError> {
    let catalog = load_fixture_catalog(fixture)?;
    let config = PipelineConfig {
        fetch: FetchPolicy::local(),
        ..PipelineConfig::default()
    };
    let top = catalog
        .top_tracks(&UserSession::anonymous(), config.time_range, config.top_limit)
        .await
        .map_err(moodtune_core::PipelineError::from)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = select_seeds(&top, config.n_seeds, &mut rng)?;
    let pool = build_candidate_pool(&seeds, &catalog, &config).await?;
    tracing::debug!(pool = pool.len(), excluded = pool.excluded_count, "pool built");
    Ok(simulate_pairs(&pool, mood, &config, trials, &mut rng)?)
}

pub fn to_text(report: &SimulationReport) -> String {
    let mut s = String::new();
    let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let _ = writeln!(
        s,
        "mood {} target ({:.4}, {:.4})",
        report.mood,
        report.target.valence(),
        report.target.energy()
    );
    let _ = writeln!(s, "trials {}", report.trials);
    let _ = writeln!(s, "pool {} tracks, {} excluded", report.pool_size, report.excluded_count);
    let _ = writeln!(s, "treatment mean distance {}", show(report.treatment_mean_distance));
    let _ = writeln!(s, "control mean distance   {}", show(report.control_mean_distance));
    let _ = writeln!(s, "gap (control - treatment) {}", show(report.distance_gap()));
    let _ = writeln!(s, "treatment shown first   {}", show(report.treatment_first_rate));
    if report.trials == 0 {
        return s;
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<10} {:>8} {:>9} {:>8}  title / artist", "track", "distance", "treatment", "control");
    for f in &report.frequencies {
        let _ = writeln!(
            s,
            "{:<10} {:>8.4} {:>9} {:>8}  {} / {}",
            f.canonical_id, f.distance, f.treatment_count, f.control_count, f.title, f.artist
        );
    }
    s
}
