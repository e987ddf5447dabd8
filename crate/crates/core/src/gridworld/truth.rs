use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GridError, GridGeometry};
use crate::geometry::Vec2;

/// Obstacle primitive of the scenario map format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Obstacle {
    Rect {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
    Circle {
        x: f64,
        y: f64,
        r: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

impl Obstacle {
    fn contains(&self, p: Vec2) -> bool {
        match *self {
            Obstacle::Rect { x0, y0, x1, y1, .. } => {
                p.x >= x0.min(x1) && p.x <= x0.max(x1) && p.y >= y0.min(y1) && p.y <= y0.max(y1)
            }
            Obstacle::Circle { x, y, r, .. } => p.distance(Vec2::new(x, y)) <= r,
        }
    }

    fn label(&self) -> Option<&str> {
        match self {
            Obstacle::Rect { label, .. } | Obstacle::Circle { label, .. } => label.as_deref(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapObject {
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub radius_m: f64,
}

impl MapObject {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// On-disk scenario map: `{width_m, height_m, cell_size_m, obstacles, objects}`.
///
/// `target_sites` optionally lists alternative placements for a scenario's
/// target object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub width_m: f64,
    pub height_m: f64,
    pub cell_size_m: f64,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub objects: Vec<MapObject>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub target_sites: Vec<Vec2>,
}

impl MapSpec {
    pub fn load(path: &Path) -> Result<Self, GridError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Rasterized ground truth the simulated sensor reads from.
#[derive(Clone, Debug)]
pub struct GroundTruthMap {
    geom: GridGeometry,
    occupied: Vec<bool>,
    labels: Vec<Option<u16>>,
    label_names: Vec<String>,
    objects: Vec<MapObject>,
    pub target_sites: Vec<Vec2>,
}

impl GroundTruthMap {
    /// Rasterizes a map spec. A cell is covered by a primitive when its center is.
    /// Objects stamp their footprint (at least their own cell) as occupied and labeled.
    pub fn from_spec(spec: &MapSpec) -> Result<Self, GridError> {
        let geom = GridGeometry::new(spec.width_m, spec.height_m, spec.cell_size_m)?;
        let mut map = Self {
            geom,
            occupied: vec![false; geom.len()],
            labels: vec![None; geom.len()],
            label_names: Vec::new(),
            objects: Vec::new(),
            target_sites: spec.target_sites.clone(),
        };
        for obstacle in &spec.obstacles {
            let label = obstacle.label().map(|l| map.intern(l));
            for idx in 0..geom.len() {
                if obstacle.contains(geom.center(idx)) {
                    map.occupied[idx] = true;
                    if label.is_some() {
                        map.labels[idx] = label;
                    }
                }
            }
        }
        for (i, object) in spec.objects.iter().enumerate() {
            let p = object.position();
            if !geom.contains(p) {
                return Err(GridError::InvalidMap(format!(
                    "objects[{i}] ({}) at ({}, {}) lies outside the map",
                    object.label, object.x, object.y
                )));
            }
            if !(object.radius_m > 0.0) {
                return Err(GridError::InvalidMap(format!(
                    "objects[{i}] ({}) must have a positive radius",
                    object.label
                )));
            }
            if spec.obstacles.iter().any(|o| o.contains(p)) {
                return Err(GridError::InvalidMap(format!(
                    "objects[{i}] ({}) at ({}, {}) lies inside an obstacle",
                    object.label, object.x, object.y
                )));
            }
            map.stamp_object(object);
        }
        map.objects = spec.objects.clone();
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, GridError> {
        Self::from_spec(&MapSpec::load(path)?)
    }

    fn intern(&mut self, label: &str) -> u16 {
        if let Some(i) = self.label_names.iter().position(|l| l == label) {
            return i as u16;
        }
        self.label_names.push(label.to_string());
        (self.label_names.len() - 1) as u16
    }

    fn stamp_object(&mut self, object: &MapObject) {
        let label = self.intern(&object.label);
        let mut cells = self.geom.cells_within(object.position(), object.radius_m);
        if let Some(own) = self.geom.cell_of(object.position()) {
            if !cells.contains(&own) {
                cells.push(own);
            }
        }
        for idx in cells {
            self.occupied[idx] = true;
            self.labels[idx] = Some(label);
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn is_occupied(&self, idx: usize) -> bool {
        self.occupied[idx]
    }

    pub fn label(&self, idx: usize) -> Option<&str> {
        self.labels[idx].map(|l| self.label_names[l as usize].as_str())
    }

    pub fn objects(&self) -> &[MapObject] {
        &self.objects
    }

    /// Whether the point's cell is inside the map and free.
    pub fn is_free(&self, p: Vec2) -> bool {
        self.geom.cell_of(p).is_some_and(|idx| !self.occupied[idx])
    }

    /// Cells of the map reachable from `from` through free cells (8-connected).
    pub fn reachable_from(&self, from: Vec2) -> Vec<bool> {
        let mut seen = vec![false; self.geom.len()];
        let Some(start) = self.geom.cell_of(from) else {
            return seen;
        };
        if self.occupied[start] {
            return seen;
        }
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(c) = stack.pop() {
            for (n, _) in self.geom.neighbors8(c) {
                if !seen[n] && !self.occupied[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
        seen
    }
}
