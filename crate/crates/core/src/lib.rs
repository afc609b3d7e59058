//! Mood-assisted music recommendation.
//!
//! Songs and moods share the valence–energy unit square ([`mood`]). A
//! listener's top tracks seed a similarity search whose results are enriched
//! with audio features ([`catalog`]) into a candidate pool ([`pipeline`]).
//! From that pool a mood-assisted track is drawn by Boltzmann sampling toward
//! the mood's target point and a control track uniformly ([`selection`]).
//! Ratings of both are journaled ([`store`]) and compared with a tied-rank
//! Mann-Whitney test ([`stats`]).

pub mod api;
pub mod catalog;
pub mod mood;
pub mod pipeline;
pub mod selection;
pub mod simulation;
pub mod stats;
pub mod store;

pub use catalog::{CatalogProvider, FetchPolicy, ProviderError, Track, TrackDescriptor};
pub use mood::{category_of, parse_mood, target_point, MoodCategory, MoodPoint};
pub use pipeline::{
    build_candidate_pool, generate_pair, select_seeds, Arm, BlindLabel, CandidatePool,
    PipelineConfig, PipelineError, RecommendationPair,
};
pub use selection::{FeatureVector, SelectionParams};
pub use simulation::{simulate_pairs, SimulationReport};
pub use stats::{mann_whitney, RankingMode, RatingSample, UTestResult};
pub use store::{ExperimentStore, ExportFilter, ExportRow, SessionMode};
