//! Operator configuration. Loaded from TOML (or JSON by extension), patched by
//! scenario overrides, and validated as a whole.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::dout::CriteriaWeights;
use crate::gridworld::OccupancyParams;
use crate::taskmap::TaskMapParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read config {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("config parse error: {0}")]
    Parse(String),
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchParams {
    /// Panorama segment count, N = 2k + 1.
    pub segments: usize,
    pub sensor_range_m: f64,
    pub rays: usize,
    pub robot_radius_m: f64,
    pub min_travel_m: f64,
    /// Re-plan after this much travel even if the local target is not reached.
    pub replan_distance_m: f64,
    /// Travel between scans while executing a path.
    pub sense_interval_m: f64,
    pub detection_range_m: f64,
    /// Fraction of the reachable area covered before switching to frontier coverage.
    pub coverage_threshold: f64,
    pub unknown_cost_factor: f64,
    pub max_steps: usize,
    /// Radius of the explored area stamped around each visited cell.
    pub roadmap_radius_m: f64,
    pub label_belief_threshold: f64,
    /// Distance at which a tour node counts as reached.
    pub tour_reach_m: f64,
    pub speed_mps: f64,
    /// Consecutive low-gain reasoning steps before falling back to coverage.
    pub stall_steps: usize,
    /// Newly covered cells per step below which a step counts as low-gain.
    pub stall_min_new_cells: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            segments: 11,
            sensor_range_m: 10.0,
            rays: 360,
            robot_radius_m: 0.5,
            min_travel_m: 3.0,
            replan_distance_m: 5.0,
            sense_interval_m: 1.0,
            detection_range_m: 10.0,
            coverage_threshold: 0.85,
            unknown_cost_factor: 1.5,
            max_steps: 400,
            roadmap_radius_m: 5.0,
            label_belief_threshold: 0.2,
            tour_reach_m: 1.0,
            speed_mps: 1.0,
            stall_steps: 6,
            stall_min_new_cells: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryParams {
    /// Weight discount factor of the experienced-search tour objective.
    pub beta: f64,
    pub sigma_scale: f64,
    pub drop_weight: f64,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self {
            beta: 0.5,
            sigma_scale: 1.0,
            drop_weight: 0.01,
        }
    }
}

impl MemoryParams {
    pub fn taskmap(&self) -> TaskMapParams {
        TaskMapParams {
            sigma_scale: self.sigma_scale,
            drop_weight: self.drop_weight,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Scripted,
    #[default]
    Heuristic,
    Remote,
    Replay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposerConfig {
    pub backend: Backend,
    /// Learning blend of the heuristic proposer (0 = no learning).
    pub blend: f64,
    /// Labels that hint at the target, with relevance weights.
    pub associations: BTreeMap<String, f64>,
    /// Replies of the scripted backend, cycled.
    pub script: Vec<String>,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_s: f64,
    /// Fixture to replay (replay backend).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<PathBuf>,
    /// Fixture to append exchanges to (remote backend).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<PathBuf>,
}

impl Default for ProposerConfig {
    fn default() -> Self {
        let mut associations = BTreeMap::new();
        associations.insert("parking_sign".to_string(), 5.0);
        Self {
            backend: Backend::Heuristic,
            blend: 0.0,
            associations,
            script: vec![format!(
                "{{{}}}",
                [5, 4, 6, 3, 7, 2, 8, 1, 9, 0, 10]
                    .iter()
                    .map(|i| format!("D{i}"))
                    .collect::<Vec<_>>()
                    .join("; ")
            )],
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_s: 30.0,
            fixture: None,
            record: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub criteria: CriteriaWeights,
    pub search: SearchParams,
    pub memory: MemoryParams,
    pub occupancy: OccupancyParams,
    pub proposer: ProposerConfig,
}

impl Config {
    /// Reads a TOML document, or JSON when the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        let config: Config = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    /// Deep-merges a JSON patch (e.g. scenario overrides) into this config.
    pub fn with_overrides(&self, overrides: &Value) -> Result<Self, ConfigError> {
        if overrides.is_null() {
            return Ok(self.clone());
        }
        let mut base = serde_json::to_value(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        merge(&mut base, overrides);
        let patched: Config =
            serde_json::from_value(base).map_err(|e| ConfigError::Parse(format!("overrides: {e}")))?;
        Ok(patched)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.search;
        if s.segments < 3 || s.segments.is_multiple_of(2) {
            return Err(invalid(
                "search.segments",
                format!(
                    "segment count must be odd and at least 3 (N = 2k + 1), got {}",
                    s.segments
                ),
            ));
        }
        self.criteria.validate().map_err(|m| invalid("criteria", m))?;
        let positive = [
            ("search.sensor_range_m", s.sensor_range_m),
            ("search.robot_radius_m", s.robot_radius_m),
            ("search.min_travel_m", s.min_travel_m),
            ("search.replan_distance_m", s.replan_distance_m),
            ("search.sense_interval_m", s.sense_interval_m),
            ("search.detection_range_m", s.detection_range_m),
            ("search.roadmap_radius_m", s.roadmap_radius_m),
            ("search.tour_reach_m", s.tour_reach_m),
            ("search.speed_mps", s.speed_mps),
            ("memory.sigma_scale", self.memory.sigma_scale),
        ];
        for (path, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(path, format!("must be > 0, got {v}")));
            }
        }
        if s.rays < 8 {
            return Err(invalid("search.rays", format!("need at least 8 rays, got {}", s.rays)));
        }
        if !(0.0..=1.0).contains(&s.coverage_threshold) {
            return Err(invalid("search.coverage_threshold", "must lie in [0, 1]"));
        }
        if !(s.unknown_cost_factor >= 1.0) {
            return Err(invalid("search.unknown_cost_factor", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&s.label_belief_threshold) {
            return Err(invalid("search.label_belief_threshold", "must lie in [0, 1]"));
        }
        if s.max_steps == 0 {
            return Err(invalid("search.max_steps", "must be at least 1"));
        }
        let m = &self.memory;
        if !(0.0..1.0).contains(&m.beta) {
            return Err(invalid(
                "memory.beta",
                format!(
                    "beta * max weight must stay below 1; need 0 <= beta < 1, got {}",
                    m.beta
                ),
            ));
        }
        if !(0.0..1.0).contains(&m.drop_weight) {
            return Err(invalid("memory.drop_weight", "must lie in [0, 1)"));
        }
        let o = &self.occupancy;
        if !(o.hit > 0.0 && o.miss < 0.0 && o.min < 0.0 && o.max > 0.0) {
            return Err(invalid("occupancy", "need hit > 0, miss < 0, min < 0 < max"));
        }
        let p = &self.proposer;
        if !(0.0..=1.0).contains(&p.blend) {
            return Err(invalid("proposer.blend", "must lie in [0, 1]"));
        }
        if !(p.timeout_s > 0.0) {
            return Err(invalid("proposer.timeout_s", "must be > 0"));
        }
        if p.backend == Backend::Scripted && p.script.is_empty() {
            return Err(invalid("proposer.script", "scripted backend needs at least one reply"));
        }
        if p.backend == Backend::Replay && p.fixture.is_none() {
            return Err(invalid("proposer.fixture", "replay backend needs a fixture path"));
        }
        Ok(())
    }
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}
