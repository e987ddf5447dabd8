use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ResolvedScenario, SimError};
use crate::config::{Backend, Config, ProposerConfig};
use crate::dout::{HeuristicProposer, Proposer, RemoteConfig, RemoteProposer, ReplayProposer, ScriptedProposer};
use crate::geometry::{polyline_length, Vec2};
use crate::gridworld::SemanticGrid;
use crate::planner::{Mode, Outcome, SearchSetup, Searcher, TraceEvent};
use crate::taskmap::TaskProbabilityMap;

/// Grid and task map carried between episodes.
#[derive(Clone, Debug)]
pub struct MemoryState {
    pub grid: SemanticGrid,
    pub taskmap: TaskProbabilityMap,
}

/// On-disk memory: a directory with `grid.json` and `taskmap.json`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpisodeMemory {
    pub dir: PathBuf,
}

impl EpisodeMemory {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn grid_path(&self) -> PathBuf {
        self.dir.join("grid.json")
    }

    pub fn taskmap_path(&self) -> PathBuf {
        self.dir.join("taskmap.json")
    }

    pub fn exists(&self) -> bool {
        self.grid_path().is_file() && self.taskmap_path().is_file()
    }

    /// Loads and checks both halves.
    pub fn load(&self) -> Result<MemoryState, SimError> {
        if !self.exists() {
            return Err(SimError::MemoryRequired);
        }
        let grid = SemanticGrid::load(&self.grid_path())
            .map_err(|e| SimError::Memory(format!("{}: {e}", self.grid_path().display())))?;
        let taskmap = TaskProbabilityMap::load(&self.taskmap_path())
            .map_err(|e| SimError::Memory(format!("{}: {e}", self.taskmap_path().display())))?;
        taskmap
            .validate()
            .map_err(|e| SimError::Memory(format!("{}: {e}", self.taskmap_path().display())))?;
        Ok(MemoryState { grid, taskmap })
    }

    pub fn save(&self, state: &MemoryState) -> Result<(), SimError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| SimError::Io(self.dir.clone(), e))?;
        state.grid.save(&self.grid_path())?;
        state.taskmap.save(&self.taskmap_path())?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceTotals {
    pub path_length_m: f64,
    pub steps: usize,
    pub proposer_calls: usize,
    pub outcome: Outcome,
    /// Simulated travel time at the configured speed.
    pub time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub found_at: Option<Vec2>,
}

/// Event log plus totals. Serialized as JSON lines, one event per line and a
/// final `{"totals": ...}` line.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchTrace {
    pub events: Vec<TraceEvent>,
    pub trajectory: Vec<Vec2>,
    pub totals: TraceTotals,
}

#[derive(Serialize, Deserialize)]
struct TotalsLine {
    totals: TraceTotals,
}

impl SearchTrace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace events serialize"));
            out.push('\n');
        }
        let totals = TotalsLine {
            totals: self.totals.clone(),
        };
        out.push_str(&serde_json::to_string(&totals).expect("totals serialize"));
        out.push('\n');
        out
    }

    /// Parses events and totals back. The trajectory is not part of the
    /// JSON-lines form and comes back empty.
    pub fn from_jsonl(text: &str) -> Result<Self, SimError> {
        let mut events = Vec::new();
        let mut totals = None;
        for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            if totals.is_some() {
                return Err(SimError::Output(format!("line {}: content after totals", i + 1)));
            }
            if let Ok(t) = serde_json::from_str::<TotalsLine>(line) {
                totals = Some(t.totals);
                continue;
            }
            let e = serde_json::from_str(line).map_err(|e| SimError::Output(format!("line {}: {e}", i + 1)))?;
            events.push(e);
        }
        let totals = totals.ok_or_else(|| SimError::Output("trace has no totals line".into()))?;
        Ok(Self {
            events,
            trajectory: Vec::new(),
            totals,
        })
    }
}

/// Trajectory as a GeoJSON-style `LineString` feature in map meters.
pub fn trajectory_geojson(trace: &SearchTrace, label: &str) -> Value {
    json!({
        "type": "Feature",
        "geometry": {
            "type": "LineString",
            "coordinates": trace.trajectory.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
        },
        "properties": {
            "target_label": label,
            "outcome": trace.totals.outcome,
            "path_length_m": trace.totals.path_length_m,
        },
    })
}

pub struct EpisodeOutput {
    pub trace: SearchTrace,
    /// Memory after the episode, find recorded when successful.
    pub memory: MemoryState,
}

/// Builds the proposer backend named by the configuration.
pub fn make_proposer(cfg: &ProposerConfig) -> Result<Box<dyn Proposer + Send>, SimError> {
    Ok(match cfg.backend {
        Backend::Scripted => Box::new(ScriptedProposer::new(cfg.script.clone())),
        Backend::Heuristic => Box::new(HeuristicProposer::new(cfg.associations.clone(), cfg.blend)),
        Backend::Remote => {
            let rc = RemoteConfig::from_env(
                &cfg.endpoint,
                &cfg.model,
                &cfg.api_key_env,
                Duration::from_secs_f64(cfg.timeout_s),
            )?;
            let p = RemoteProposer::new(rc);
            match &cfg.record {
                Some(path) => Box::new(p.recording_to(path)),
                None => Box::new(p),
            }
        }
        Backend::Replay => {
            let path = cfg.fixture.as_ref().ok_or_else(|| {
                SimError::Config(crate::config::ConfigError::Invalid {
                    path: "proposer.fixture".into(),
                    message: "the replay backend needs a fixture file".into(),
                })
            })?;
            Box::new(ReplayProposer::load(path)?)
        }
    })
}

/// Runs one episode.
///
/// First-time episodes start from an empty grid and task map and ignore
/// `memory`. Experienced episodes require it, start from its grid and search
/// its task map first. On success the find is recorded in the returned task
/// map at the object's true position.
pub fn run_episode(
    scenario: &ResolvedScenario,
    memory: Option<&MemoryState>,
    proposer: &mut dyn Proposer,
) -> Result<EpisodeOutput, SimError> {
    let kind = scenario.scenario.episode_kind;
    let config: &Config = &scenario.config;
    let (grid, mut taskmap, mode) = if kind.is_experienced() {
        let m = memory.ok_or(SimError::MemoryRequired)?;
        (Some(m.grid.clone()), m.taskmap.clone(), Mode::ExperiencedTour)
    } else {
        (None, TaskProbabilityMap::new(), Mode::Reasoning)
    };
    let label = scenario.scenario.target_label.clone();
    let result = Searcher::new(SearchSetup {
        truth: &scenario.truth,
        config,
        target_label: label.clone(),
        start: scenario.start,
        grid,
        taskmap: Some(&taskmap),
        start_mode: mode,
    })?
    .run(proposer);
    if let Some(obj) = &result.found_object {
        taskmap.record_find(&label, obj.position(), obj.radius_m, &config.memory.taskmap())?;
    }
    debug_assert!((polyline_length(&result.trajectory) - result.path_length_m).abs() < 1e-6);
    let totals = TraceTotals {
        path_length_m: result.path_length_m,
        steps: result.steps,
        proposer_calls: result.proposer_calls,
        outcome: result.outcome,
        time_s: result.path_length_m / config.search.speed_mps,
        message: result.message,
        found_at: result.found_object.as_ref().map(|o| o.position()),
    };
    Ok(EpisodeOutput {
        trace: SearchTrace {
            events: result.events,
            trajectory: result.trajectory,
            totals,
        },
        memory: MemoryState {
            grid: result.grid,
            taskmap,
        },
    })
}

/// File-level episode: loads memory from `memory_dir` when given, runs, and
/// writes `trace.jsonl`, `trajectory.geojson` and the updated memory under
/// `out/memory`. The input memory is never modified.
pub fn run_episode_in_dir(
    scenario: &ResolvedScenario,
    memory_dir: Option<&Path>,
    out: &Path,
) -> Result<EpisodeOutput, SimError> {
    let memory = match (scenario.scenario.episode_kind.is_experienced(), memory_dir) {
        (true, None) => return Err(SimError::MemoryRequired),
        (true, Some(dir)) => Some(EpisodeMemory::new(dir).load()?),
        (false, _) => None,
    };
    let mut proposer = make_proposer(&scenario.config.proposer)?;
    let output = run_episode(scenario, memory.as_ref(), proposer.as_mut())?;
    std::fs::create_dir_all(out).map_err(|e| SimError::Io(out.to_path_buf(), e))?;
    write(&out.join("trace.jsonl"), &output.trace.to_jsonl())?;
    let geo = trajectory_geojson(&output.trace, &scenario.scenario.target_label);
    write(
        &out.join("trajectory.geojson"),
        &serde_json::to_string_pretty(&geo).expect("geojson serializes"),
    )?;
    EpisodeMemory::new(out.join("memory")).save(&output.memory)?;
    Ok(output)
}

fn write(path: &Path, text: &str) -> Result<(), SimError> {
    std::fs::write(path, text).map_err(|e| SimError::Io(path.to_path_buf(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{EpisodeKind, Scenario};

    fn resolved(kind: EpisodeKind, site: usize) -> ResolvedScenario {
        Scenario::generated("car", kind, 11, site)
            .resolve(&Config::default())
            .unwrap()
    }

    #[test]
    fn experienced_without_memory_is_rejected() {
        let r = resolved(EpisodeKind::ExperiencedSame, 0);
        let mut p = make_proposer(&r.config.proposer).unwrap();
        let err = run_episode(&r, None, p.as_mut()).err().unwrap();
        assert!(err.to_string().contains("memory required"));
    }

    #[test]
    fn first_time_records_find_and_trace_round_trips() {
        let r = resolved(EpisodeKind::FirstTime, 0);
        let mut p = make_proposer(&r.config.proposer).unwrap();
        let out = run_episode(&r, None, p.as_mut()).unwrap();
        assert_eq!(out.trace.totals.outcome, Outcome::Found);
        let layer = out.memory.taskmap.layer("car").unwrap();
        assert_eq!(layer.len(), 1);
        assert_eq!(layer.components[0].mean, r.spec.target_sites[0]);
        let text = out.trace.to_jsonl();
        let back = SearchTrace::from_jsonl(&text).unwrap();
        assert_eq!(back.events, out.trace.events);
        assert_eq!(back.totals, out.trace.totals);
        assert!((polyline_length(&out.trace.trajectory) - out.trace.totals.path_length_m).abs() < 1e-6);
    }

    #[test]
    fn missing_replay_fixture_is_a_config_error() {
        let cfg = ProposerConfig {
            backend: Backend::Replay,
            ..ProposerConfig::default()
        };
        let err = make_proposer(&cfg).err().unwrap().to_string();
        assert!(err.contains("proposer.fixture"), "{err}");
    }
}
