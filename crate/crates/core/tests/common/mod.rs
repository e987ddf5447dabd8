//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use objsearch::gridworld::{CellState, GridGeometry, OccupancyParams, SemanticGrid};
use objsearch::Vec2;
use rand::Rng;

/// Random grid: each cell occupied with `p_occ`, unknown with `p_unknown`,
/// otherwise free.
pub fn random_grid(rng: &mut impl Rng, nx: usize, ny: usize, p_occ: f64, p_unknown: f64) -> SemanticGrid {
    let geom = GridGeometry::new(nx as f64 * 0.5, ny as f64 * 0.5, 0.5).unwrap();
    let mut g = SemanticGrid::new(geom, OccupancyParams::default());
    for i in 0..geom.len() {
        let r: f64 = rng.gen();
        let s = if r < p_occ {
            CellState::Occupied
        } else if r < p_occ + p_unknown {
            CellState::Unknown
        } else {
            CellState::Free
        };
        g.set_state(i, s);
    }
    g
}

/// Clearance by scanning every occupied cell (center to center, meters).
pub fn brute_clearance(grid: &SemanticGrid) -> Vec<f64> {
    let geom = *grid.geometry();
    let occ: Vec<Vec2> = (0..geom.len())
        .filter(|&i| grid.state(i) == CellState::Occupied)
        .map(|i| geom.center(i))
        .collect();
    (0..geom.len())
        .map(|i| {
            let c = geom.center(i);
            occ.iter().map(|o| o.distance(c)).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Reference shortest-path costs: plain Dijkstra on an explicit 8-connected
/// graph. A cell is enterable when not occupied and clear by `clearance_m`;
/// diagonals need both side cells enterable; entering an unknown cell costs
/// `unknown_factor` times the step length.
pub fn dijkstra_oracle(grid: &SemanticGrid, start: usize, clearance_m: f64, unknown_factor: f64) -> Vec<f64> {
    let geom = *grid.geometry();
    let (nx, ny) = (geom.nx as i64, geom.ny as i64);
    let clear = brute_clearance(grid);
    let ok = |x: i64, y: i64| -> bool {
        if x < 0 || y < 0 || x >= nx || y >= ny {
            return false;
        }
        let i = (y * nx + x) as usize;
        grid.state(i) != CellState::Occupied && clear[i] >= clearance_m - 1e-9
    };
    let mut dist = vec![f64::INFINITY; geom.len()];
    let mut heap = BinaryHeap::new();
    dist[start] = 0.0;
    heap.push(Reverse((Ordered(0.0), start)));
    while let Some(Reverse((Ordered(d), u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        let (ux, uy) = ((u as i64) % nx, (u as i64) / nx);
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let (vx, vy) = (ux + dx, uy + dy);
                if !ok(vx, vy) {
                    continue;
                }
                if dx != 0 && dy != 0 && !(ok(ux + dx, uy) && ok(ux, uy + dy)) {
                    continue;
                }
                let v = (vy * nx + vx) as usize;
                let step = if dx != 0 && dy != 0 { 2f64.sqrt() } else { 1.0 } * geom.cell_size_m;
                let f = if grid.state(v) == CellState::Unknown {
                    unknown_factor
                } else {
                    1.0
                };
                let nd = d + step * f;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(Reverse((Ordered(nd), v)));
                }
            }
        }
    }
    dist
}

#[derive(Clone, Copy, PartialEq)]
pub struct Ordered(pub f64);

impl Eq for Ordered {}

impl PartialOrd for Ordered {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ordered {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Every permutation of `items`, by Heap's algorithm.
pub fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, a, out);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
    }
    let mut a = items.to_vec();
    let mut out = Vec::new();
    heap(a.len(), &mut a, &mut out);
    out
}

/// Open-tour objective written out directly: Σ d(a, b)·(1 − β·π_b) over
/// consecutive legs.
pub fn tour_objective(d: &[f64], n: usize, weights: &[f64], beta: f64, order: &[usize]) -> f64 {
    order
        .windows(2)
        .map(|w| d[w[0] * n + w[1]] * (1.0 - beta * weights[w[1]]))
        .sum()
}

/// Exhaustive minimum over all orders that start at node 0.
pub fn brute_force_tour(d: &[f64], n: usize, weights: &[f64], beta: f64) -> f64 {
    let rest: Vec<usize> = (1..n).collect();
    permutations(&rest)
        .into_iter()
        .map(|p| {
            let mut order = vec![0];
            order.extend(p);
            tour_objective(d, n, weights, beta, &order)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Two-component moment match written from the textbook formulas.
pub fn merge_oracle(
    w1: f64,
    m1: (f64, f64),
    c1: [[f64; 2]; 2],
    w2: f64,
    m2: (f64, f64),
    c2: [[f64; 2]; 2],
) -> (f64, (f64, f64), [[f64; 2]; 2]) {
    let w = w1 + w2;
    let mx = (w1 * m1.0 + w2 * m2.0) / w;
    let my = (w1 * m1.1 + w2 * m2.1) / w;
    let mut c = [[0.0; 2]; 2];
    let d1 = [m1.0 - mx, m1.1 - my];
    let d2 = [m2.0 - mx, m2.1 - my];
    for r in 0..2 {
        for s in 0..2 {
            c[r][s] = (w1 * (c1[r][s] + d1[r] * d1[s]) + w2 * (c2[r][s] + d2[r] * d2[s])) / w;
        }
    }
    (w, (mx, my), c)
}
