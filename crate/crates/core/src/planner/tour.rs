use serde::{Deserialize, Serialize};

use super::PlannerError;
use crate::geometry::Vec2;
use crate::gridworld::{CellState, ExploredRegion, Navigator, SemanticGrid};
use crate::taskmap::{extract_targets, TaskProbabilityMap};
use crate::tsp::{solve, Tour, TourNode, TourProblem};

/// Pairwise path costs between `points` under the navigator's rules.
/// Unreachable pairs get ten times the map diagonal so a tour still exists.
pub fn path_distance_matrix(nav: &Navigator, points: &[Vec2]) -> Result<Vec<f64>, PlannerError> {
    let n = points.len();
    let geom = nav.geometry();
    let sentinel = 10.0 * geom.width_m.hypot(geom.height_m);
    let cells: Vec<Option<usize>> = points.iter().map(|&p| geom.cell_of(p)).collect();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        let field = nav.distance_field(points[i])?;
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = cells[j].map_or(f64::INFINITY, |c| field[c]);
            d[i * n + j] = if v.is_finite() { v } else { sentinel };
        }
    }
    Ok(d)
}

/// A tour over remembered target locations. Index 0 of `goals` is the robot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperiencedPlan {
    pub goals: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub tour: Tour,
    /// Whether the weight-discounted objective was used (task-map source).
    pub discounted: bool,
}

impl ExperiencedPlan {
    /// True when there is nothing to visit beyond the robot itself.
    pub fn is_empty(&self) -> bool {
        self.goals.len() <= 1
    }

    /// Goal points in visiting order, robot excluded.
    pub fn ordered_goals(&self) -> Vec<Vec2> {
        self.tour.order.iter().skip(1).map(|&i| self.goals[i]).collect()
    }
}

/// Builds the experienced-search tour for `label`.
///
/// Task-map component means (weighted, discounted objective) take priority;
/// without a layer the grid's labeled clusters are used with `β = 0`.
/// Candidates are snapped to the nearest passable cell within `snap_radius`;
/// those with none are dropped.
pub fn plan_experienced(
    taskmap: Option<&TaskProbabilityMap>,
    nav: &Navigator,
    label: &str,
    robot: Vec2,
    beta: f64,
    belief_threshold: f64,
    snap_radius: f64,
) -> Result<ExperiencedPlan, PlannerError> {
    let (candidates, discounted): (Vec<(Vec2, f64)>, bool) = match taskmap.and_then(|t| t.layer(label)) {
        Some(gmm) => (
            extract_targets(gmm)
                .into_iter()
                .map(|c| (c.position, c.weight))
                .collect(),
            true,
        ),
        None => (
            nav.grid()
                .query_label_locations(label, belief_threshold)
                .into_iter()
                .map(|p| (p, 0.0))
                .collect(),
            false,
        ),
    };
    let mut goals = vec![robot];
    let mut weights = vec![0.0];
    for (p, w) in candidates {
        if let Some(g) = nav.nearest_passable(p, snap_radius) {
            if !goals[1..].contains(&g) {
                goals.push(g);
                weights.push(w.clamp(0.0, 1.0));
            }
        }
    }
    let beta = if discounted { beta } else { 0.0 };
    if goals.len() == 1 {
        return Ok(ExperiencedPlan {
            goals,
            weights,
            tour: Tour {
                order: vec![0],
                cost: 0.0,
            },
            discounted,
        });
    }
    let distance = path_distance_matrix(nav, &goals)?;
    let nodes = goals
        .iter()
        .zip(&weights)
        .enumerate()
        .map(|(id, (&position, &weight))| TourNode { id, position, weight })
        .collect();
    let problem = TourProblem::new(nodes, distance, beta)?;
    let tour = solve(&problem);
    Ok(ExperiencedPlan {
        goals,
        weights,
        tour,
        discounted,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierCluster {
    pub cells: Vec<usize>,
    pub centroid: Vec2,
    /// Member cell center closest to the centroid.
    pub representative: Vec2,
}

/// 8-connected clusters of covered free cells bordering (4-neighbour) cells
/// that are neither covered nor known occupied. Row-major discovery order.
pub fn frontier_clusters(grid: &SemanticGrid, explored: &ExploredRegion) -> Vec<FrontierCluster> {
    let geom = *grid.geometry();
    let is_frontier: Vec<bool> = (0..geom.len())
        .map(|idx| {
            explored.is_covered(idx)
                && grid.state(idx) == CellState::Free
                && geom
                    .neighbors4(idx)
                    .any(|nb| !explored.is_covered(nb) && grid.state(nb) != CellState::Occupied)
        })
        .collect();
    let mut seen = vec![false; geom.len()];
    let mut clusters = Vec::new();
    for start in 0..geom.len() {
        if !is_frontier[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut cells = Vec::new();
        while let Some(c) = stack.pop() {
            cells.push(c);
            for (nb, _) in geom.neighbors8(c) {
                if is_frontier[nb] && !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        cells.sort_unstable();
        let sum = cells.iter().fold(Vec2::ZERO, |acc, &c| acc + geom.center(c));
        let centroid = sum * (1.0 / cells.len() as f64);
        let rep = *cells
            .iter()
            .min_by(|&&a, &&b| {
                geom.center(a)
                    .distance(centroid)
                    .total_cmp(&geom.center(b).distance(centroid))
                    .then(a.cmp(&b))
            })
            .expect("cluster is non-empty");
        clusters.push(FrontierCluster {
            cells,
            centroid,
            representative: geom.center(rep),
        });
    }
    clusters
}

/// Orders `goals` by the plain path-length tour from `robot`. Returns goal
/// indices in visiting order along with the tour over `[robot] + goals`.
pub fn order_goals(nav: &Navigator, robot: Vec2, goals: &[Vec2]) -> Result<(Vec<usize>, Tour), PlannerError> {
    let mut points = vec![robot];
    points.extend_from_slice(goals);
    let distance = path_distance_matrix(nav, &points)?;
    let nodes = points
        .iter()
        .enumerate()
        .map(|(id, &position)| TourNode {
            id,
            position,
            weight: 0.0,
        })
        .collect();
    let problem = TourProblem::new(nodes, distance, 0.0)?;
    let tour = solve(&problem);
    let order = tour.order.iter().skip(1).map(|&i| i - 1).collect();
    Ok((order, tour))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{GridGeometry, OccupancyParams};
    use crate::taskmap::TaskMapParams;

    fn free_grid(w: f64, h: f64) -> SemanticGrid {
        let mut g = SemanticGrid::new(GridGeometry::new(w, h, 0.5).unwrap(), OccupancyParams::default());
        for i in 0..g.geometry().len() {
            g.set_state(i, CellState::Free);
        }
        g
    }

    #[test]
    fn taskmap_layer_gives_discounted_tour() {
        let g = free_grid(40.0, 40.0);
        let nav = Navigator::new(&g, 0.5, 1.5);
        let mut tm = TaskProbabilityMap::new();
        let p = TaskMapParams::default();
        tm.record_find("car", Vec2::new(30.25, 30.25), 0.5, &p).unwrap();
        tm.record_find("car", Vec2::new(5.25, 30.25), 0.5, &p).unwrap();
        let plan = plan_experienced(Some(&tm), &nav, "car", Vec2::new(20.25, 5.25), 0.5, 0.2, 3.0).unwrap();
        assert!(plan.discounted);
        assert_eq!(plan.goals.len(), 3);
        assert_eq!(plan.tour.order.len(), 3);
        assert_eq!(plan.tour.order[0], 0);
    }

    #[test]
    fn no_memory_no_evidence_is_empty() {
        let g = free_grid(20.0, 20.0);
        let nav = Navigator::new(&g, 0.5, 1.5);
        let plan = plan_experienced(None, &nav, "car", Vec2::new(5.25, 5.25), 0.5, 0.2, 3.0).unwrap();
        assert!(plan.is_empty());
        assert_eq!(plan.tour.order, vec![0]);
    }

    #[test]
    fn unknown_space_has_no_frontier_until_covered() {
        let g = SemanticGrid::new(GridGeometry::new(10.0, 10.0, 0.5).unwrap(), OccupancyParams::default());
        let explored = ExploredRegion::new(*g.geometry(), 5.0);
        assert!(frontier_clusters(&g, &explored).is_empty());
    }

    #[test]
    fn path_distances_use_detours() {
        let mut g = free_grid(20.0, 20.0);
        let geom = *g.geometry();
        for iy in 0..36 {
            g.set_state(geom.index(20, iy).unwrap(), CellState::Occupied);
        }
        let nav = Navigator::new(&g, 0.5, 1.5);
        let pts = [Vec2::new(5.25, 5.25), Vec2::new(15.25, 5.25)];
        let d = path_distance_matrix(&nav, &pts).unwrap();
        // Around the wall end at y = 18: 2·(13 + 5·(√2 − 1)) ≈ 30.1 m.
        assert!(d[1] > 30.0 && d[1] < 31.0, "{}", d[1]);
        assert!((d[1] - d[2]).abs() < 1e-9);
    }
}
