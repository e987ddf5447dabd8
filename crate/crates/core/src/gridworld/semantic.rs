use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExploredRegion, GridError, GridGeometry, RayScan};
use crate::geometry::Vec2;

/// Name of the implicit "no semantic label" category, always label index 0.
pub const UNKNOWN_LABEL: &str = "unknown";
pub const GRID_SNAPSHOT_FORMAT: &str = "objsearch-semantic-grid";
pub const GRID_SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyParams {
    pub hit: f64,
    pub miss: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for OccupancyParams {
    fn default() -> Self {
        Self {
            hit: 0.85,
            miss: -0.4,
            min: -5.0,
            max: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
}

/// The robot's incrementally built map: occupancy log-odds plus per-cell label
/// evidence counts.
///
/// Label beliefs are add-one smoothed over the whole vocabulary (index 0 is
/// [`UNKNOWN_LABEL`]), so a cell with counts `c_l` and total `N` reports
/// `(c_l + 1) / (N + K)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticGrid {
    geom: GridGeometry,
    params: OccupancyParams,
    log_odds: Vec<f64>,
    observed: Vec<bool>,
    evidence: Vec<Vec<(u16, u32)>>,
    labels: Vec<String>,
}

impl SemanticGrid {
    pub fn new(geom: GridGeometry, params: OccupancyParams) -> Self {
        Self {
            geom,
            params,
            log_odds: vec![0.0; geom.len()],
            observed: vec![false; geom.len()],
            evidence: vec![Vec::new(); geom.len()],
            labels: vec![UNKNOWN_LABEL.to_string()],
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn params(&self) -> &OccupancyParams {
        &self.params
    }

    pub fn log_odds(&self, idx: usize) -> f64 {
        self.log_odds[idx]
    }

    pub fn is_observed(&self, idx: usize) -> bool {
        self.observed[idx]
    }

    pub fn state(&self, idx: usize) -> CellState {
        if !self.observed[idx] {
            CellState::Unknown
        } else if self.log_odds[idx] > 0.0 {
            CellState::Occupied
        } else {
            CellState::Free
        }
    }

    pub fn state_at(&self, p: Vec2) -> Option<CellState> {
        self.geom.cell_of(p).map(|idx| self.state(idx))
    }

    /// Directly overwrites a cell, as if it had been observed with saturated evidence.
    pub fn set_state(&mut self, idx: usize, state: CellState) {
        match state {
            CellState::Unknown => {
                self.observed[idx] = false;
                self.log_odds[idx] = 0.0;
            }
            CellState::Free => {
                self.observed[idx] = true;
                self.log_odds[idx] = self.params.min;
            }
            CellState::Occupied => {
                self.observed[idx] = true;
                self.log_odds[idx] = self.params.max;
            }
        }
    }

    /// Label vocabulary, `[UNKNOWN_LABEL, ...]` in first-seen order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn label_id(&self, label: &str) -> Option<u16> {
        self.labels.iter().position(|l| l == label).map(|i| i as u16)
    }

    fn intern(&mut self, label: &str) -> u16 {
        match self.label_id(label) {
            Some(id) => id,
            None => {
                self.labels.push(label.to_string());
                (self.labels.len() - 1) as u16
            }
        }
    }

    fn add_evidence(&mut self, idx: usize, label: u16) {
        let counts = &mut self.evidence[idx];
        match counts.iter_mut().find(|(l, _)| *l == label) {
            Some((_, c)) => *c += 1,
            None => {
                counts.push((label, 1));
                counts.sort_unstable_by_key(|(l, _)| *l);
            }
        }
    }

    /// Full categorical belief of a cell, indexed like [`Self::labels`].
    pub fn label_belief(&self, idx: usize) -> Vec<f64> {
        let k = self.labels.len() as f64;
        let total: u32 = self.evidence[idx].iter().map(|(_, c)| c).sum();
        let denom = total as f64 + k;
        let mut belief = vec![1.0 / denom; self.labels.len()];
        for &(l, c) in &self.evidence[idx] {
            belief[l as usize] = (c as f64 + 1.0) / denom;
        }
        belief
    }

    /// Most believed label of a cell with its belief; `None` without evidence.
    /// Ties resolve to the lower label index.
    pub fn argmax_label(&self, idx: usize) -> Option<(&str, f64)> {
        let counts = &self.evidence[idx];
        if counts.is_empty() {
            return None;
        }
        let total: u32 = counts.iter().map(|(_, c)| c).sum();
        let &(best, count) = counts.iter().fold(None, |acc: Option<&(u16, u32)>, e| match acc {
            Some(a) if a.1 >= e.1 => Some(a),
            _ => Some(e),
        })?;
        let belief = (count as f64 + 1.0) / (total as f64 + self.labels.len() as f64);
        Some((self.labels[best as usize].as_str(), belief))
    }

    /// Fuses one scan. Each cell is updated at most once per scan: a cell that
    /// stops any ray counts as a hit, otherwise a traversed cell counts as free.
    /// This makes the update independent of ray order.
    pub fn integrate_scan(&mut self, scan: &RayScan, explored: &mut ExploredRegion) {
        let mut hits: BTreeMap<usize, Option<String>> = BTreeMap::new();
        let mut free: BTreeSet<usize> = BTreeSet::new();
        for ray in &scan.rays {
            free.extend(ray.free_cells.iter().copied());
            if let Some(cell) = ray.hit_cell {
                let entry = hits.entry(cell).or_insert(None);
                // Deterministic choice if two rays ever disagree on a label.
                if let Some(label) = &ray.hit_label {
                    if entry.as_ref().is_none_or(|l| label < l) {
                        *entry = Some(label.clone());
                    }
                }
            }
        }
        let p = self.params;
        for &cell in &free {
            if hits.contains_key(&cell) {
                continue;
            }
            self.log_odds[cell] = (self.log_odds[cell] + p.miss).clamp(p.min, p.max);
            self.observed[cell] = true;
        }
        for (&cell, label) in &hits {
            self.log_odds[cell] = (self.log_odds[cell] + p.hit).clamp(p.min, p.max);
            self.observed[cell] = true;
            let id = match label {
                Some(l) => self.intern(l),
                None => 0,
            };
            self.add_evidence(cell, id);
        }
        for cell in free.iter().chain(hits.keys()) {
            explored.set_covered(*cell, self.state(*cell) == CellState::Free);
        }
    }

    /// Centroids of 8-connected clusters whose argmax label is `label` with
    /// belief at least `threshold`, in row-major discovery order.
    pub fn query_label_locations(&self, label: &str, threshold: f64) -> Vec<Vec2> {
        let Some(id) = self.label_id(label) else {
            return Vec::new();
        };
        let target = self.labels[id as usize].as_str();
        let member: Vec<bool> = (0..self.geom.len())
            .map(|idx| {
                self.argmax_label(idx)
                    .is_some_and(|(l, b)| l == target && b >= threshold)
            })
            .collect();
        let mut seen = vec![false; member.len()];
        let mut centroids = Vec::new();
        for start in 0..member.len() {
            if !member[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let (mut sum, mut n) = (Vec2::ZERO, 0usize);
            while let Some(c) = stack.pop() {
                sum = sum + self.geom.center(c);
                n += 1;
                for (nb, _) in self.geom.neighbors8(c) {
                    if member[nb] && !seen[nb] {
                        seen[nb] = true;
                        stack.push(nb);
                    }
                }
            }
            centroids.push(sum * (1.0 / n as f64));
        }
        centroids
    }

    pub fn to_snapshot(&self) -> GridSnapshot {
        GridSnapshot {
            format: GRID_SNAPSHOT_FORMAT.to_string(),
            version: GRID_SNAPSHOT_VERSION,
            width_m: self.geom.width_m,
            height_m: self.geom.height_m,
            cell_size_m: self.geom.cell_size_m,
            nx: self.geom.nx,
            ny: self.geom.ny,
            occupancy: self.params,
            labels: self.labels.clone(),
            log_odds: self.log_odds.clone(),
            observed: self.observed.iter().map(|&o| o as u8).collect(),
            evidence: self.evidence.clone(),
        }
    }

    pub fn from_snapshot(snap: GridSnapshot) -> Result<Self, GridError> {
        if snap.format != GRID_SNAPSHOT_FORMAT {
            return Err(GridError::Snapshot(format!("unexpected format {:?}", snap.format)));
        }
        if snap.version != GRID_SNAPSHOT_VERSION {
            return Err(GridError::Snapshot(format!(
                "unsupported version {} (expected {GRID_SNAPSHOT_VERSION})",
                snap.version
            )));
        }
        let geom = GridGeometry::new(snap.width_m, snap.height_m, snap.cell_size_m)?;
        if geom.nx != snap.nx || geom.ny != snap.ny {
            return Err(GridError::Snapshot("grid dimensions disagree with extent".into()));
        }
        let n = geom.len();
        if snap.log_odds.len() != n || snap.observed.len() != n || snap.evidence.len() != n {
            return Err(GridError::Snapshot(format!("expected {n} cells per layer")));
        }
        if snap.labels.first().map(String::as_str) != Some(UNKNOWN_LABEL) {
            return Err(GridError::Snapshot("label 0 must be \"unknown\"".into()));
        }
        let p = snap.occupancy;
        if snap.log_odds.iter().any(|&l| !(l >= p.min && l <= p.max)) {
            return Err(GridError::Snapshot("log-odds outside clamp range".into()));
        }
        if snap
            .evidence
            .iter()
            .flatten()
            .any(|&(l, _)| l as usize >= snap.labels.len())
        {
            return Err(GridError::Snapshot("evidence references unknown label".into()));
        }
        Ok(Self {
            geom,
            params: p,
            log_odds: snap.log_odds,
            observed: snap.observed.into_iter().map(|o| o != 0).collect(),
            evidence: snap.evidence,
            labels: snap.labels,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), GridError> {
        std::fs::write(path, serde_json::to_string(&self.to_snapshot())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GridError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_snapshot(serde_json::from_str(&text)?)
    }
}

/// Versioned JSON snapshot; every per-cell layer is row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSnapshot {
    pub format: String,
    pub version: u32,
    pub width_m: f64,
    pub height_m: f64,
    pub cell_size_m: f64,
    pub nx: usize,
    pub ny: usize,
    pub occupancy: OccupancyParams,
    pub labels: Vec<String>,
    pub log_odds: Vec<f64>,
    pub observed: Vec<u8>,
    pub evidence: Vec<Vec<(u16, u32)>>,
}
