//! Open-path tour optimization over candidate target locations.
//!
//! Edge `i → j` costs `d(i, j) · (1 − β π_j)`, so heavier targets are cheaper to
//! travel to. With β = 0 the objective is plain path length. The tour always
//! starts at node 0 (the robot) and does not return.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

/// Largest instance handled by [`solve_exact`].
pub const EXACT_MAX_NODES: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum TspError {
    #[error("use heuristic: {0} nodes exceeds the exact limit of {EXACT_MAX_NODES}")]
    TooManyNodes(usize),
    #[error("invalid tour: {0}")]
    InvalidTour(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TourNode {
    pub id: usize,
    pub position: Vec2,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TourProblem {
    pub nodes: Vec<TourNode>,
    /// Row-major `n × n` distances in meters.
    pub distance: Vec<f64>,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    /// Node positions in the problem's node list, starting with 0.
    pub order: Vec<usize>,
    pub cost: f64,
}

impl TourProblem {
    /// Builds a problem after checking the distance matrix and weights.
    /// Node 0's weight is forced to 0.
    pub fn new(mut nodes: Vec<TourNode>, distance: Vec<f64>, beta: f64) -> Result<Self, TspError> {
        let n = nodes.len();
        if n == 0 {
            return Err(TspError::InvalidProblem("no nodes".into()));
        }
        if distance.len() != n * n {
            return Err(TspError::InvalidProblem(format!(
                "distance matrix has {} entries, expected {}",
                distance.len(),
                n * n
            )));
        }
        for i in 0..n {
            if distance[i * n + i] != 0.0 {
                return Err(TspError::InvalidProblem(format!("nonzero diagonal at {i}")));
            }
        }
        if distance.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(TspError::InvalidProblem(
                "distances must be finite and nonnegative".into(),
            ));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(TspError::InvalidProblem(format!(
                "beta must be nonnegative, got {beta}"
            )));
        }
        nodes[0].weight = 0.0;
        for node in &nodes {
            if !(0.0..=1.0).contains(&node.weight) {
                return Err(TspError::InvalidProblem(format!(
                    "node {} weight {} outside [0, 1]",
                    node.id, node.weight
                )));
            }
            if beta * node.weight >= 1.0 {
                return Err(TspError::InvalidProblem(format!(
                    "beta * weight must stay below 1 (node {})",
                    node.id
                )));
            }
        }
        Ok(Self { nodes, distance, beta })
    }

    /// Euclidean distances between node positions.
    pub fn euclidean(nodes: Vec<TourNode>, beta: f64) -> Result<Self, TspError> {
        let n = nodes.len();
        let mut distance = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    distance[i * n + j] = nodes[i].position.distance(nodes[j].position);
                }
            }
        }
        Self::new(nodes, distance, beta)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.distance[i * self.len() + j]
    }

    /// Discounted cost of traveling `i → j`.
    pub fn edge_cost(&self, i: usize, j: usize) -> f64 {
        self.dist(i, j) * (1.0 - self.beta * self.nodes[j].weight)
    }

    fn cost_unchecked(&self, order: &[usize]) -> f64 {
        order.windows(2).map(|w| self.edge_cost(w[0], w[1])).sum()
    }
}

/// Objective value of `order`, which must be a permutation starting at 0.
pub fn tour_cost(problem: &TourProblem, order: &[usize]) -> Result<f64, TspError> {
    let n = problem.len();
    if order.len() != n {
        return Err(TspError::InvalidTour(format!(
            "expected {n} nodes, got {}",
            order.len()
        )));
    }
    if order.first() != Some(&0) {
        return Err(TspError::InvalidTour("tour must start at node 0".into()));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(TspError::InvalidTour(format!("node {i} repeated or out of range")));
        }
    }
    Ok(problem.cost_unchecked(order))
}

/// Held-Karp over subsets of nodes `1..n`. Among optimal tours the
/// lexicographically smallest order is returned.
pub fn solve_exact(problem: &TourProblem) -> Result<Tour, TspError> {
    let n = problem.len();
    if n > EXACT_MAX_NODES {
        return Err(TspError::TooManyNodes(n));
    }
    if n <= 1 {
        return Ok(Tour {
            order: vec![0],
            cost: 0.0,
        });
    }
    let m = n - 1;
    let full = (1usize << m) - 1;
    // finish[mask][j]: cheapest cost to visit every node in `mask` starting
    // from node j+1, where `mask` holds the still-unvisited nodes.
    let mut finish = vec![f64::INFINITY; (full + 1) * m];
    finish[..m].fill(0.0);
    for mask in 1..=full {
        for j in 0..m {
            if mask & (1 << j) != 0 {
                continue;
            }
            let mut best = f64::INFINITY;
            for k in 0..m {
                if mask & (1 << k) != 0 {
                    let c = problem.edge_cost(j + 1, k + 1) + finish[(mask & !(1 << k)) * m + k];
                    if c < best {
                        best = c;
                    }
                }
            }
            finish[mask * m + j] = best;
        }
    }
    let tol = |v: f64| 1e-12 * v.abs().max(1.0);
    let mut order = vec![0usize];
    let mut mask = full;
    let mut current = 0usize;
    while mask != 0 {
        let candidates: Vec<(usize, f64)> = (0..m)
            .filter(|k| mask & (1 << k) != 0)
            .map(|k| {
                (
                    k,
                    problem.edge_cost(current, k + 1) + finish[(mask & !(1 << k)) * m + k],
                )
            })
            .collect();
        let best = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        let (k, _) = *candidates
            .iter()
            .find(|c| c.1 <= best + tol(best))
            .expect("non-empty mask");
        order.push(k + 1);
        mask &= !(1 << k);
        current = k + 1;
    }
    let cost = problem.cost_unchecked(&order);
    Ok(Tour { order, cost })
}

/// Nearest-neighbour construction on discounted edge costs.
pub fn nearest_neighbor(problem: &TourProblem) -> Tour {
    let n = problem.len();
    let mut order = vec![0usize];
    let mut used = vec![false; n];
    used[0] = true;
    let mut current = 0;
    for _ in 1..n {
        let next = (0..n)
            .filter(|&j| !used[j])
            .min_by(|&a, &b| {
                problem
                    .edge_cost(current, a)
                    .total_cmp(&problem.edge_cost(current, b))
                    .then(a.cmp(&b))
            })
            .expect("unvisited node remains");
        used[next] = true;
        order.push(next);
        current = next;
    }
    let cost = problem.cost_unchecked(&order);
    Tour { order, cost }
}

/// Reverses `order[i..=j]` whenever that lowers the cost; node 0 stays first.
/// Returns the number of applied moves.
pub fn two_opt(problem: &TourProblem, tour: &mut Tour) -> usize {
    let n = tour.order.len();
    let mut moves = 0;
    let mut improved = true;
    while improved {
        improved = false;
        for i in 1..n.saturating_sub(1) {
            for j in (i + 1)..n {
                tour.order[i..=j].reverse();
                let cost = problem.cost_unchecked(&tour.order);
                if cost < tour.cost - 1e-12 * tour.cost.abs().max(1.0) {
                    tour.cost = cost;
                    moves += 1;
                    improved = true;
                } else {
                    tour.order[i..=j].reverse();
                }
            }
        }
    }
    moves
}

/// Moves runs of one to three nodes, forward or reversed, to the position
/// that lowers the cost most; node 0 stays first. Returns the number of
/// applied moves.
pub fn or_opt(problem: &TourProblem, tour: &mut Tour) -> usize {
    let n = tour.order.len();
    let mut moves = 0;
    let mut improved = true;
    while improved {
        improved = false;
        for len in 1..=3.min(n.saturating_sub(2)) {
            for i in 1..=(n - len) {
                let mut rest = tour.order.clone();
                let seg: Vec<usize> = rest.drain(i..i + len).collect();
                let mut best: Option<(f64, Vec<usize>)> = None;
                for k in 1..=rest.len() {
                    for reversed in [false, true] {
                        if k == i && !reversed {
                            continue;
                        }
                        let mut cand = rest.clone();
                        let mut s = seg.clone();
                        if reversed {
                            s.reverse();
                        }
                        cand.splice(k..k, s);
                        let cost = problem.cost_unchecked(&cand);
                        if best.as_ref().is_none_or(|b| cost < b.0) {
                            best = Some((cost, cand));
                        }
                    }
                }
                if let Some((cost, cand)) = best {
                    if cost < tour.cost - 1e-12 * tour.cost.abs().max(1.0) {
                        tour.order = cand;
                        tour.cost = cost;
                        moves += 1;
                        improved = true;
                    }
                }
            }
        }
    }
    moves
}

/// Nearest neighbour, then alternating 2-opt and Or-opt passes until
/// neither improves.
pub fn solve_heuristic(problem: &TourProblem) -> Tour {
    if problem.len() <= 1 {
        return Tour {
            order: vec![0],
            cost: 0.0,
        };
    }
    let mut tour = nearest_neighbor(problem);
    loop {
        two_opt(problem, &mut tour);
        if or_opt(problem, &mut tour) == 0 {
            break;
        }
    }
    tour
}

/// Exact when small enough, heuristic otherwise.
pub fn solve(problem: &TourProblem) -> Tour {
    solve_exact(problem).unwrap_or_else(|_| solve_heuristic(problem))
}
