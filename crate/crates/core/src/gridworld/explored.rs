use super::GridGeometry;
use crate::geometry::Vec2;

/// Visited cells, sensor-covered free cells, and the visited set dilated by the
/// roadmap radius (the area treated as already explored).
#[derive(Clone, Debug, PartialEq)]
pub struct ExploredRegion {
    geom: GridGeometry,
    radius_m: f64,
    visited: Vec<bool>,
    covered: Vec<bool>,
    near_visited: Vec<bool>,
    visited_count: usize,
    covered_count: usize,
}

impl ExploredRegion {
    pub fn new(geom: GridGeometry, radius_m: f64) -> Self {
        Self {
            geom,
            radius_m,
            visited: vec![false; geom.len()],
            covered: vec![false; geom.len()],
            near_visited: vec![false; geom.len()],
            visited_count: 0,
            covered_count: 0,
        }
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn is_visited(&self, idx: usize) -> bool {
        self.visited[idx]
    }

    pub fn is_covered(&self, idx: usize) -> bool {
        self.covered[idx]
    }

    pub fn is_near_visited(&self, idx: usize) -> bool {
        self.near_visited[idx]
    }

    pub fn visited_count(&self) -> usize {
        self.visited_count
    }

    pub fn covered_count(&self) -> usize {
        self.covered_count
    }

    pub(crate) fn set_covered(&mut self, idx: usize, free: bool) {
        if free && !self.covered[idx] {
            self.covered[idx] = true;
            self.covered_count += 1;
        } else if !free && self.covered[idx] {
            // Cells that turn out occupied leave the covered set; a visited cell
            // cannot be occupied in a static world, so visited stays a subset.
            if !self.visited[idx] {
                self.covered[idx] = false;
                self.covered_count -= 1;
            }
        }
    }

    /// Marks the robot as having stood at `p`.
    pub fn visit(&mut self, p: Vec2) {
        let Some(idx) = self.geom.cell_of(p) else {
            return;
        };
        if !self.covered[idx] {
            self.covered[idx] = true;
            self.covered_count += 1;
        }
        if self.visited[idx] {
            return;
        }
        self.visited[idx] = true;
        self.visited_count += 1;
        for c in self.geom.cells_within(self.geom.center(idx), self.radius_m) {
            self.near_visited[c] = true;
        }
    }

    /// Marks every cell along a polyline as visited.
    pub fn visit_polyline(&mut self, points: &[Vec2]) {
        let step = self.geom.cell_size_m * 0.5;
        for w in points.windows(2) {
            let len = w[0].distance(w[1]);
            let n = (len / step).ceil().max(1.0) as usize;
            for k in 0..=n {
                self.visit(w[0].lerp(w[1], k as f64 / n as f64));
            }
        }
        if points.len() == 1 {
            self.visit(points[0]);
        }
    }
}

/// Fraction of `segment_cells` lying in the explored (dilated visited) area.
/// Returns 0 for an empty segment.
pub fn region_overlap_ratio(explored: &ExploredRegion, segment_cells: &[usize]) -> f64 {
    if segment_cells.is_empty() {
        return 0.0;
    }
    let overlap = segment_cells.iter().filter(|&&c| explored.near_visited[c]).count();
    overlap as f64 / segment_cells.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region() -> ExploredRegion {
        ExploredRegion::new(GridGeometry::new(20.0, 20.0, 0.5).unwrap(), 2.0)
    }

    #[test]
    fn fully_inside_and_fully_novel() {
        let mut ex = region();
        ex.visit(Vec2::new(5.0, 5.0));
        let g = ex.geom;
        let inside: Vec<usize> = g.cells_within(Vec2::new(5.25, 5.25), 1.0);
        assert_eq!(region_overlap_ratio(&ex, &inside), 1.0);
        let novel: Vec<usize> = g.cells_within(Vec2::new(15.0, 15.0), 1.0);
        assert_eq!(region_overlap_ratio(&ex, &novel), 0.0);
        assert_eq!(region_overlap_ratio(&ex, &[]), 0.0);
    }

    #[test]
    fn half_overlap_by_set_counting() {
        let mut ex = region();
        ex.visit(Vec2::new(5.25, 5.25));
        let g = ex.geom;
        let inside = g.cells_within(Vec2::new(5.25, 5.25), 1.5);
        let outside: Vec<usize> = (0..inside.len())
            .map(|k| g.index(30 + (k % 5) as i64, 30 + (k / 5) as i64).unwrap())
            .collect();
        let segment: Vec<usize> = inside.iter().chain(outside.iter()).copied().collect();
        let expected = inside.len() as f64 / segment.len() as f64;
        let r = region_overlap_ratio(&ex, &segment);
        assert!((r - 0.5).abs() <= 1.0 / segment.len() as f64);
        assert_eq!(r, expected);
    }

    #[test]
    fn visited_subset_of_covered() {
        let mut ex = region();
        ex.visit_polyline(&[Vec2::new(1.0, 1.0), Vec2::new(8.0, 3.0)]);
        for i in 0..ex.visited.len() {
            if ex.visited[i] {
                assert!(ex.covered[i]);
            }
        }
        assert!(ex.visited_count() >= 14);
    }
}
