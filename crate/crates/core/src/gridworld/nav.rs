use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{traverse_ray, CellState, GridError, GridGeometry, SemanticGrid};
use crate::geometry::Vec2;

const FAR: f64 = 1e20;

/// Euclidean distance (meters) from every cell center to the nearest
/// known-occupied cell center. Exact squared EDT (Felzenszwalb-Huttenlocher).
#[derive(Clone, Debug)]
pub struct ClearanceMap {
    dist_m: Vec<f64>,
}

impl ClearanceMap {
    pub fn compute(grid: &SemanticGrid) -> Self {
        let geom = *grid.geometry();
        let (nx, ny) = (geom.nx, geom.ny);
        let mut sq: Vec<f64> = (0..geom.len())
            .map(|i| if grid.state(i) == CellState::Occupied { 0.0 } else { FAR })
            .collect();
        let n = nx.max(ny);
        let mut f = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut v = vec![0usize; n];
        let mut z = vec![0.0; n + 1];
        for ix in 0..nx {
            for iy in 0..ny {
                f[iy] = sq[iy * nx + ix];
            }
            edt_1d(&f[..ny], &mut d[..ny], &mut v, &mut z);
            for iy in 0..ny {
                sq[iy * nx + ix] = d[iy];
            }
        }
        for iy in 0..ny {
            f[..nx].copy_from_slice(&sq[iy * nx..(iy + 1) * nx]);
            edt_1d(&f[..nx], &mut d[..nx], &mut v, &mut z);
            sq[iy * nx..(iy + 1) * nx].copy_from_slice(&d[..nx]);
        }
        let dist_m = sq
            .into_iter()
            .map(|s| {
                if s >= FAR * 0.5 {
                    f64::INFINITY
                } else {
                    s.sqrt() * geom.cell_size_m
                }
            })
            .collect();
        Self { dist_m }
    }

    pub fn distance(&self, idx: usize) -> f64 {
        self.dist_m[idx]
    }
}

fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let mut s;
        loop {
            let p = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let diff = q as f64 - v[k] as f64;
        *out = diff * diff + f[v[k]];
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub waypoints: Vec<Vec2>,
    pub cells: Vec<usize>,
    /// Sum of step lengths (meters), unknown cells weighted by the penalty factor.
    pub cost: f64,
}

/// Traversability queries over one grid state at a fixed clearance.
///
/// A cell is passable when it is not known-occupied and its clearance is at
/// least `clearance_m`. Unknown cells are passable at `unknown_factor` times
/// the step cost. Diagonal steps may not cut blocked corners.
pub struct Navigator<'a> {
    grid: &'a SemanticGrid,
    clearance: ClearanceMap,
    clearance_m: f64,
    unknown_factor: f64,
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    g: f64,
    cell: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.g.total_cmp(&other.g))
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<'a> Navigator<'a> {
    pub fn new(grid: &'a SemanticGrid, clearance_m: f64, unknown_factor: f64) -> Self {
        Self {
            grid,
            clearance: ClearanceMap::compute(grid),
            clearance_m,
            unknown_factor,
        }
    }

    pub fn grid(&self) -> &SemanticGrid {
        self.grid
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.grid.geometry()
    }

    pub fn clearance_m(&self) -> f64 {
        self.clearance_m
    }

    pub fn clearance_map(&self) -> &ClearanceMap {
        &self.clearance
    }

    pub fn passable(&self, idx: usize) -> bool {
        self.grid.state(idx) != CellState::Occupied && self.clearance.distance(idx) >= self.clearance_m - 1e-9
    }

    pub fn passable_at(&self, p: Vec2) -> bool {
        self.geometry().cell_of(p).is_some_and(|i| self.passable(i))
    }

    fn cost_factor(&self, idx: usize) -> f64 {
        if self.grid.state(idx) == CellState::Unknown {
            self.unknown_factor
        } else {
            1.0
        }
    }

    fn can_step(&self, from: usize, to: usize) -> bool {
        if !self.passable(to) {
            return false;
        }
        let g = self.geometry();
        let (fx, fy) = g.coords(from);
        let (tx, ty) = g.coords(to);
        if fx != tx && fy != ty {
            let a = g.index(tx as i64, fy as i64);
            let b = g.index(fx as i64, ty as i64);
            return a.is_some_and(|a| self.passable(a)) && b.is_some_and(|b| self.passable(b));
        }
        true
    }

    fn start_cell(&self, from: Vec2) -> Result<usize, GridError> {
        let start = self
            .geometry()
            .cell_of(from)
            .ok_or(GridError::PoseOutOfBounds { x: from.x, y: from.y })?;
        if self.grid.state(start) == CellState::Occupied {
            return Err(GridError::StartBlocked { x: from.x, y: from.y });
        }
        Ok(start)
    }

    /// A* over the 8-connected grid. The start cell is exempt from the
    /// clearance requirement; the goal cell is not.
    pub fn astar(&self, from: Vec2, to: Vec2) -> Result<Option<GridPath>, GridError> {
        let start = self.start_cell(from)?;
        let geom = *self.geometry();
        let Some(goal) = geom.cell_of(to) else {
            return Ok(None);
        };
        if goal == start {
            return Ok(Some(GridPath {
                waypoints: vec![from, to],
                cells: vec![start],
                cost: 0.0,
            }));
        }
        if !self.passable(goal) {
            return Ok(None);
        }
        let c = geom.cell_size_m;
        let (gx, gy) = geom.coords(goal);
        let heuristic = |idx: usize| {
            let (x, y) = geom.coords(idx);
            let dx = (x as f64 - gx as f64).abs();
            let dy = (y as f64 - gy as f64).abs();
            (dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy)) * c
        };
        let mut g_cost = vec![f64::INFINITY; geom.len()];
        let mut parent = vec![usize::MAX; geom.len()];
        let mut closed = vec![false; geom.len()];
        let mut open = BinaryHeap::new();
        g_cost[start] = 0.0;
        open.push(Open {
            f: heuristic(start),
            g: 0.0,
            cell: start,
        });
        while let Some(Open { g, cell, .. }) = open.pop() {
            if closed[cell] {
                continue;
            }
            closed[cell] = true;
            if cell == goal {
                break;
            }
            for (nb, step) in geom.neighbors8(cell) {
                if closed[nb] || !self.can_step(cell, nb) {
                    continue;
                }
                let ng = g + step * c * self.cost_factor(nb);
                if ng < g_cost[nb] {
                    g_cost[nb] = ng;
                    parent[nb] = cell;
                    open.push(Open {
                        f: ng + heuristic(nb),
                        g: ng,
                        cell: nb,
                    });
                }
            }
        }
        if !closed[goal] {
            return Ok(None);
        }
        let mut cells = vec![goal];
        while let Some(&last) = cells.last() {
            if last == start {
                break;
            }
            cells.push(parent[last]);
        }
        cells.reverse();
        let mut waypoints: Vec<Vec2> = cells.iter().map(|&i| geom.center(i)).collect();
        waypoints[0] = from;
        *waypoints.last_mut().expect("non-empty path") = to;
        Ok(Some(GridPath {
            waypoints,
            cells,
            cost: g_cost[goal],
        }))
    }

    /// Single-source path costs to every cell under the same rules as [`Self::astar`].
    pub fn distance_field(&self, from: Vec2) -> Result<Vec<f64>, GridError> {
        let start = self.start_cell(from)?;
        let geom = *self.geometry();
        let c = geom.cell_size_m;
        let mut dist = vec![f64::INFINITY; geom.len()];
        let mut open = BinaryHeap::new();
        dist[start] = 0.0;
        open.push(Open {
            f: 0.0,
            g: 0.0,
            cell: start,
        });
        while let Some(Open { g, cell, .. }) = open.pop() {
            if g > dist[cell] {
                continue;
            }
            for (nb, step) in geom.neighbors8(cell) {
                if !self.can_step(cell, nb) {
                    continue;
                }
                let ng = g + step * c * self.cost_factor(nb);
                if ng < dist[nb] {
                    dist[nb] = ng;
                    open.push(Open { f: ng, g: ng, cell: nb });
                }
            }
        }
        Ok(dist)
    }

    /// Whether the straight segment `a → b` only crosses passable cells.
    /// `exempt` names one cell (typically the robot's own) that is not checked.
    pub fn segment_clear(&self, a: Vec2, b: Vec2, exempt: Option<usize>) -> bool {
        let geom = *self.geometry();
        let len = a.distance(b);
        if geom.cell_of(a).is_none() || geom.cell_of(b).is_none() {
            return false;
        }
        let mut ok = true;
        let mut last = None;
        traverse_ray(&geom, a, (b - a).angle(), len, |idx, _| {
            last = Some(idx);
            if Some(idx) != exempt && !self.passable(idx) {
                ok = false;
                return true;
            }
            false
        });
        // The traversal can stop a hair short of `b` on exact cell boundaries.
        if ok {
            let end = geom.cell_of(b).expect("checked above");
            if last != Some(end) && Some(end) != exempt && !self.passable(end) {
                ok = false;
            }
        }
        ok
    }

    /// Passable cell center within `max_radius` of `p` closest to `p`.
    pub fn nearest_passable(&self, p: Vec2, max_radius: f64) -> Option<Vec2> {
        let geom = self.geometry();
        geom.cells_within(p, max_radius)
            .into_iter()
            .filter(|&i| self.passable(i))
            .map(|i| (geom.center(i).distance(p), i))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, i)| geom.center(i))
    }
}

/// Shortest 8-connected path honoring clearance; `None` if unreachable.
pub fn astar_path(
    grid: &SemanticGrid,
    from: Vec2,
    to: Vec2,
    clearance_m: f64,
    unknown_factor: f64,
) -> Result<Option<GridPath>, GridError> {
    Navigator::new(grid, clearance_m, unknown_factor).astar(from, to)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::OccupancyParams;

    fn free_grid(w: f64, h: f64) -> SemanticGrid {
        let mut g = SemanticGrid::new(GridGeometry::new(w, h, 0.5).unwrap(), OccupancyParams::default());
        for i in 0..g.geometry().len() {
            g.set_state(i, CellState::Free);
        }
        g
    }

    #[test]
    fn straight_corridor_cost() {
        let g = free_grid(10.0, 3.0);
        let from = Vec2::new(0.25, 1.25);
        let to = Vec2::new(5.25, 1.25);
        let p = astar_path(&g, from, to, 0.0, 1.5).unwrap().unwrap();
        assert!((p.cost - 10.0 * 0.5).abs() < 1e-12);
        assert_eq!(p.waypoints.first(), Some(&from));
        assert_eq!(p.waypoints.last(), Some(&to));
    }

    #[test]
    fn walled_off_goal_is_none() {
        let mut g = free_grid(10.0, 10.0);
        let geom = *g.geometry();
        for ix in 10..15 {
            for iy in 10..15 {
                if ix == 10 || ix == 14 || iy == 10 || iy == 14 {
                    g.set_state(geom.index(ix, iy).unwrap(), CellState::Occupied);
                }
            }
        }
        let r = astar_path(
            &g,
            Vec2::new(1.0, 1.0),
            geom.center(geom.index(12, 12).unwrap()),
            0.0,
            1.5,
        );
        assert!(r.unwrap().is_none());
    }

    #[test]
    fn start_blocked_is_error() {
        let mut g = free_grid(5.0, 5.0);
        g.set_state(0, CellState::Occupied);
        let err = astar_path(&g, Vec2::new(0.1, 0.1), Vec2::new(4.0, 4.0), 0.0, 1.5).unwrap_err();
        assert!(err.to_string().contains("start blocked"));
    }

    #[test]
    fn unknown_cells_cost_more() {
        let mut g = free_grid(10.0, 1.0);
        let geom = *g.geometry();
        for ix in 4..8 {
            g.set_state(geom.index(ix, 0).unwrap(), CellState::Unknown);
            g.set_state(geom.index(ix, 1).unwrap(), CellState::Unknown);
        }
        let p = astar_path(&g, geom.center(0), geom.center(geom.index(10, 0).unwrap()), 0.0, 1.5)
            .unwrap()
            .unwrap();
        assert!((p.cost - (6.0 * 0.5 + 4.0 * 0.75)).abs() < 1e-12);
    }

    #[test]
    fn clearance_matches_brute_force() {
        let mut g = free_grid(8.0, 6.0);
        let geom = *g.geometry();
        for (k, idx) in [5usize, 40, 41, 77, 150, 151, 152, 190].iter().enumerate() {
            let _ = k;
            g.set_state(*idx, CellState::Occupied);
        }
        let cm = ClearanceMap::compute(&g);
        for i in 0..geom.len() {
            let brute = (0..geom.len())
                .filter(|&j| g.state(j) == CellState::Occupied)
                .map(|j| geom.center(i).distance(geom.center(j)))
                .fold(f64::INFINITY, f64::min);
            assert!((cm.distance(i) - brute).abs() < 1e-9, "cell {i}");
        }
        let empty = free_grid(3.0, 3.0);
        assert!(ClearanceMap::compute(&empty).distance(0).is_infinite());
    }

    #[test]
    fn segment_clear_detects_wall() {
        let mut g = free_grid(10.0, 10.0);
        let geom = *g.geometry();
        for iy in 0..20 {
            g.set_state(geom.index(10, iy).unwrap(), CellState::Occupied);
        }
        let nav = Navigator::new(&g, 0.0, 1.5);
        assert!(!nav.segment_clear(Vec2::new(1.0, 5.0), Vec2::new(9.0, 5.0), None));
        assert!(nav.segment_clear(Vec2::new(1.0, 5.0), Vec2::new(4.0, 8.0), None));
    }
}
