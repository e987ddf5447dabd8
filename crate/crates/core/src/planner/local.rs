use serde::{Deserialize, Serialize};

use super::{PanoramaObservation, PlannerError};
use crate::dout::RankedPropositions;
use crate::geometry::Vec2;
use crate::gridworld::Navigator;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTarget {
    pub position: Vec2,
    pub source_segment: usize,
}

/// Travel distance into a wedge of free depth `depth`: half the depth, kept
/// at least `min_travel` and at most `depth − d_safe`. `None` when the wedge
/// is too shallow for both bounds.
pub fn local_target_distance(depth: f64, min_travel: f64, d_safe: f64) -> Option<f64> {
    let hi = depth - d_safe;
    if hi < min_travel {
        return None;
    }
    Some((0.5 * depth).clamp(min_travel, hi))
}

/// Viable local targets in ranked order: one per segment whose mid-wedge
/// point is passable.
pub fn candidate_targets(
    ranked: &RankedPropositions,
    obs: &PanoramaObservation,
    nav: &Navigator,
    min_travel: f64,
    d_safe: f64,
) -> Result<Vec<LocalTarget>, PlannerError> {
    if ranked.order.len() != obs.n() {
        return Err(PlannerError::RankingMismatch(ranked.order.len(), obs.n()));
    }
    let origin = obs.pose.position;
    Ok(ranked
        .order
        .iter()
        .filter_map(|&seg| {
            let s = &obs.segments[seg];
            let dist = local_target_distance(s.free_depth_m, min_travel, d_safe)?;
            let p = origin + Vec2::from_angle(s.center_angle) * dist;
            (nav.passable_at(p) && p.distance(origin) >= min_travel - 1e-9).then_some(LocalTarget {
                position: p,
                source_segment: seg,
            })
        })
        .collect())
}

/// First viable candidate in ranked order.
pub fn select_local_target(
    ranked: &RankedPropositions,
    obs: &PanoramaObservation,
    nav: &Navigator,
    min_travel: f64,
    d_safe: f64,
) -> Result<LocalTarget, PlannerError> {
    candidate_targets(ranked, obs, nav, min_travel, d_safe)?
        .into_iter()
        .next()
        .ok_or(PlannerError::NoViableDirection)
}

/// Greedy line-of-sight shortcutting. From each kept waypoint, jumps to the
/// farthest later waypoint reachable by a straight segment over passable
/// cells. The first segment exempts the start cell, like A* does.
pub fn smooth_path(path: &[Vec2], nav: &Navigator) -> Vec<Vec2> {
    if path.len() <= 2 {
        return path.to_vec();
    }
    let start_cell = nav.geometry().cell_of(path[0]);
    let mut out = vec![path[0]];
    let mut i = 0;
    while i < path.len() - 1 {
        let exempt = if i == 0 { start_cell } else { None };
        let mut next = i + 1;
        for j in (i + 2..path.len()).rev() {
            if nav.segment_clear(path[i], path[j], exempt) {
                next = j;
                break;
            }
        }
        out.push(path[next]);
        i = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polyline_length;
    use crate::gridworld::{CellState, GridGeometry, OccupancyParams, Pose, SemanticGrid};
    use crate::planner::ObservedSegment;
    use std::collections::BTreeMap;

    fn free_grid(w: f64, h: f64) -> SemanticGrid {
        let mut g = SemanticGrid::new(GridGeometry::new(w, h, 0.5).unwrap(), OccupancyParams::default());
        for i in 0..g.geometry().len() {
            g.set_state(i, CellState::Free);
        }
        g
    }

    fn obs(depths: &[f64]) -> PanoramaObservation {
        let n = depths.len();
        PanoramaObservation {
            pose: Pose::new(Vec2::new(25.0, 25.0), 0.0),
            segments: depths
                .iter()
                .enumerate()
                .map(|(i, &d)| ObservedSegment {
                    index: i,
                    center_angle: (i as f64 - (n / 2) as f64) * std::f64::consts::TAU / n as f64,
                    labels: BTreeMap::new(),
                    free_depth_m: d,
                    wedge_cells: vec![],
                })
                .collect(),
        }
    }

    fn ranked(order: Vec<usize>) -> RankedPropositions {
        let n = order.len();
        RankedPropositions {
            order,
            scores: vec![0.0; n],
            advisory: vec![0.0; n],
        }
    }

    #[test]
    fn clamp_arithmetic() {
        assert_eq!(local_target_distance(20.0, 3.0, 1.0), Some(10.0));
        assert_eq!(local_target_distance(5.0, 3.0, 1.0), Some(3.0));
        assert_eq!(local_target_distance(3.5, 3.0, 1.0), None);
        assert_eq!(local_target_distance(0.5, 3.0, 1.0), None);
    }

    #[test]
    fn top_segment_at_half_depth() {
        let g = free_grid(50.0, 50.0);
        let nav = Navigator::new(&g, 0.5, 1.5);
        let o = obs(&[20.0, 20.0, 20.0]);
        let t = select_local_target(&ranked(vec![1, 0, 2]), &o, &nav, 3.0, 1.0).unwrap();
        assert_eq!(t.source_segment, 1);
        assert!((t.position.distance(Vec2::new(25.0, 25.0)) - 10.0).abs() < 1e-12);
        assert!((t.position.x - 35.0).abs() < 1e-12);
    }

    #[test]
    fn blocked_top_falls_through() {
        let g = free_grid(50.0, 50.0);
        let nav = Navigator::new(&g, 0.5, 1.5);
        let o = obs(&[0.5, 20.0, 8.0]);
        let t = select_local_target(&ranked(vec![0, 2, 1]), &o, &nav, 3.0, 1.0).unwrap();
        assert_eq!(t.source_segment, 2);
    }

    #[test]
    fn all_walled_is_error() {
        let g = free_grid(50.0, 50.0);
        let nav = Navigator::new(&g, 0.5, 1.5);
        let o = obs(&[0.4, 0.4, 0.4]);
        assert!(matches!(
            select_local_target(&ranked(vec![0, 1, 2]), &o, &nav, 3.0, 1.0),
            Err(PlannerError::NoViableDirection)
        ));
    }

    #[test]
    fn smoothing_straight_and_l_shapes() {
        let g = free_grid(20.0, 20.0);
        let nav = Navigator::new(&g, 0.5, 1.5);
        let straight: Vec<Vec2> = (0..8).map(|i| Vec2::new(2.25 + i as f64 * 0.5, 2.25)).collect();
        assert_eq!(smooth_path(&straight, &nav), vec![straight[0], straight[7]]);
        let l = vec![Vec2::new(2.25, 2.25), Vec2::new(8.25, 2.25), Vec2::new(8.25, 8.25)];
        let s = smooth_path(&l, &nav);
        assert_eq!(s, vec![l[0], l[2]]);
        assert!(polyline_length(&s) <= polyline_length(&l));
    }

    #[test]
    fn smoothing_keeps_clearance_around_a_block() {
        let mut g = free_grid(20.0, 20.0);
        let geom = *g.geometry();
        for ix in 14..26 {
            for iy in 10..30 {
                g.set_state(geom.index(ix, iy).unwrap(), CellState::Occupied);
            }
        }
        let nav = Navigator::new(&g, 1.0, 1.5);
        let path = nav
            .astar(Vec2::new(2.25, 10.25), Vec2::new(17.25, 10.25))
            .unwrap()
            .unwrap();
        let s = smooth_path(&path.waypoints, &nav);
        assert!(s.len() < path.waypoints.len());
        assert!(polyline_length(&s) <= polyline_length(&path.waypoints) + 1e-9);
        assert_eq!(s.first(), path.waypoints.first());
        assert_eq!(s.last(), path.waypoints.last());
        // Oracle: sample every segment finely and check each touched cell.
        for w in s.windows(2) {
            let n = (w[0].distance(w[1]) / 0.05).ceil() as usize;
            for k in 0..=n {
                let p = w[0].lerp(w[1], k as f64 / n.max(1) as f64);
                let idx = geom.cell_of(p).unwrap();
                assert!(nav.clearance_map().distance(idx) >= 1.0 - 1e-9, "cell {idx} too close");
            }
        }
    }
}
