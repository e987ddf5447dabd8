//! Scenario-driven episodes, batches with aggregate metrics, and the
//! proposer convergence harness.

mod batch;
mod converge;
mod episode;
mod scenario;

pub use batch::{aggregate, run_batch, run_batch_to_dir, BatchReport, KindSummary, Manifest, MetricsRow, ScenarioRef};
pub use converge::{
    convergence_fixture, run_convergence, stub_proposer, ConvergencePoint, ConvergenceReport, ConvergenceSetup,
};
pub use episode::{
    make_proposer, run_episode, run_episode_in_dir, trajectory_geojson, EpisodeMemory, EpisodeOutput, MemoryState,
    SearchTrace, TraceTotals,
};
pub use scenario::{generate_map, EpisodeKind, MapGenerator, ResolvedScenario, Scenario, TARGET_RADIUS_M};

use std::path::PathBuf;

use thiserror::Error;

use crate::config::ConfigError;
use crate::dout::{DoutError, ProposerError};
use crate::gridworld::GridError;
use crate::planner::PlannerError;
use crate::taskmap::GmmError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, std::io::Error),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("memory required: experienced episodes need a memory directory holding grid.json and taskmap.json")]
    MemoryRequired,
    #[error("memory: {0}")]
    Memory(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("output: {0}")]
    Output(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error(transparent)]
    Proposer(#[from] ProposerError),
    #[error(transparent)]
    Dout(#[from] DoutError),
}
