//! Ground-truth world, the robot's semantic occupancy grid, ray-cast sensing,
//! grid path search, and explored-region bookkeeping.

mod explored;
mod nav;
mod semantic;
mod sense;
mod truth;

pub use explored::{region_overlap_ratio, ExploredRegion};
pub use nav::{astar_path, ClearanceMap, GridPath, Navigator};
pub use semantic::{
    CellState, GridSnapshot, OccupancyParams, SemanticGrid, GRID_SNAPSHOT_FORMAT, GRID_SNAPSHOT_VERSION, UNKNOWN_LABEL,
};
pub use sense::{sense, traverse_ray, Ray, RayScan};
pub use truth::{GroundTruthMap, MapObject, MapSpec, Obstacle};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, Vec2};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("pose out of bounds: ({x:.3}, {y:.3})")]
    PoseOutOfBounds { x: f64, y: f64 },
    #[error("start blocked at ({x:.3}, {y:.3})")]
    StartBlocked { x: f64, y: f64 },
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid sensor parameters: {0}")]
    InvalidSensor(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Robot pose in the world frame. Heading is kept in (-π, π].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading: wrap_angle(heading),
        }
    }
}

/// Shared cell geometry of a ground-truth map and a semantic grid.
///
/// Cells are stored row-major: index = `iy * nx + ix`, with `ix` along +x.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width_m: f64,
    pub height_m: f64,
    pub cell_size_m: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridGeometry {
    pub fn new(width_m: f64, height_m: f64, cell_size_m: f64) -> Result<Self, GridError> {
        if !(width_m > 0.0 && height_m > 0.0 && width_m.is_finite() && height_m.is_finite()) {
            return Err(GridError::InvalidMap(format!(
                "map extent must be positive, got {width_m} x {height_m}"
            )));
        }
        if !(cell_size_m > 0.0 && cell_size_m.is_finite()) {
            return Err(GridError::InvalidMap(format!(
                "cell size must be positive, got {cell_size_m}"
            )));
        }
        let nx = ((width_m / cell_size_m) - 1e-9).ceil().max(1.0) as usize;
        let ny = ((height_m / cell_size_m) - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            width_m,
            height_m,
            cell_size_m,
            nx,
            ny,
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width_m && p.y < self.height_m
    }

    pub fn cell_of(&self, p: Vec2) -> Option<usize> {
        if !p.is_finite() {
            return None;
        }
        let ix = (p.x / self.cell_size_m).floor();
        let iy = (p.y / self.cell_size_m).floor();
        self.index(ix as i64, iy as i64)
    }

    /// Flat index of integer cell coordinates, `None` outside the grid.
    pub fn index(&self, ix: i64, iy: i64) -> Option<usize> {
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            None
        } else {
            Some(iy as usize * self.nx + ix as usize)
        }
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn center(&self, idx: usize) -> Vec2 {
        let (ix, iy) = self.coords(idx);
        Vec2::new(
            (ix as f64 + 0.5) * self.cell_size_m,
            (iy as f64 + 0.5) * self.cell_size_m,
        )
    }

    /// 8-connected neighbours paired with their step length in cell units.
    pub fn neighbors8(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (ix, iy) = self.coords(idx);
        const OFFSETS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        OFFSETS.iter().filter_map(move |&(dx, dy)| {
            let n = self.index(ix as i64 + dx, iy as i64 + dy)?;
            let step = if dx != 0 && dy != 0 {
                std::f64::consts::SQRT_2
            } else {
                1.0
            };
            Some((n, step))
        })
    }

    pub fn neighbors4(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (ix, iy) = self.coords(idx);
        [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)]
            .into_iter()
            .filter_map(move |(dx, dy)| self.index(ix as i64 + dx, iy as i64 + dy))
    }

    /// All cells whose centers lie within `radius` of `p`.
    pub fn cells_within(&self, p: Vec2, radius: f64) -> Vec<usize> {
        let c = self.cell_size_m;
        let lo_x = ((p.x - radius) / c).floor().max(0.0) as i64;
        let hi_x = ((p.x + radius) / c).floor() as i64;
        let lo_y = ((p.y - radius) / c).floor().max(0.0) as i64;
        let hi_y = ((p.y + radius) / c).floor() as i64;
        let mut out = Vec::new();
        for iy in lo_y..=hi_y {
            for ix in lo_x..=hi_x {
                if let Some(idx) = self.index(ix, iy) {
                    if self.center(idx).distance(p) <= radius + 1e-9 {
                        out.push(idx);
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_indexing() {
        let g = GridGeometry::new(10.0, 5.0, 0.5).unwrap();
        assert_eq!((g.nx, g.ny), (20, 10));
        let idx = g.cell_of(Vec2::new(1.2, 0.7)).unwrap();
        assert_eq!(g.coords(idx), (2, 1));
        assert_eq!(g.center(idx), Vec2::new(1.25, 0.75));
        assert!(g.cell_of(Vec2::new(-0.1, 1.0)).is_none());
        assert!(g.cell_of(Vec2::new(10.0, 1.0)).is_none());
    }

    #[test]
    fn rejects_degenerate_geometry() {
        assert!(GridGeometry::new(0.0, 5.0, 0.5).is_err());
        assert!(GridGeometry::new(5.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn pose_heading_normalized() {
        let p = Pose::new(Vec2::ZERO, 3.0 * std::f64::consts::PI);
        assert!((p.heading - std::f64::consts::PI).abs() < 1e-12);
    }
}
