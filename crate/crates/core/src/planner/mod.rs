//! Search planning: reasoning search over panorama segments, experienced
//! search over remembered target locations, and frontier coverage as the
//! completeness fallback.
//!
//! The mode machine is
//!
//! ```text
//! experienced_tour --(tour exhausted)--> reasoning
//! reasoning --(no viable direction | coverage threshold | stall)--> coverage_fallback
//! coverage_fallback --(new target evidence)--> reasoning
//! ```
//!
//! and `found` is absorbing.

mod local;
mod observe;
mod search;
mod tour;

pub use local::{candidate_targets, local_target_distance, select_local_target, smooth_path, LocalTarget};
pub use observe::{build_observation, observation_from_scan, segment_of, ObservedSegment, PanoramaObservation};
pub use search::{Decision, Outcome, SearchResult, SearchSetup, SearchState, Searcher, TourProgress, TraceEvent};
pub use tour::{
    frontier_clusters, order_goals, path_distance_matrix, plan_experienced, ExperiencedPlan, FrontierCluster,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dout::DoutError;
use crate::gridworld::GridError;
use crate::tsp::TspError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Reasoning,
    ExperiencedTour,
    CoverageFallback,
}

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("segment count must be odd and at least 3 (N = 2k + 1), got {0}")]
    InvalidSegmentCount(usize),
    #[error("no viable direction")]
    NoViableDirection,
    #[error("search exhausted, target absent")]
    SearchExhausted,
    #[error("ranking covers {0} segments, observation has {1}")]
    RankingMismatch(usize, usize),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Dout(#[from] DoutError),
    #[error(transparent)]
    Tsp(#[from] TspError),
}
