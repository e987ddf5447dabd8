use serde::{Deserialize, Serialize};

use super::{GridError, GridGeometry, GroundTruthMap, Pose};
use crate::geometry::Vec2;

/// One simulated range-bearing measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    /// World-frame bearing in radians.
    pub angle: f64,
    pub hit_distance_m: f64,
    pub hit_label: Option<String>,
    /// Cell that stopped the ray, if any.
    pub hit_cell: Option<usize>,
    /// Free cells the ray passed through before the hit (or out to range).
    pub free_cells: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayScan {
    pub origin: Pose,
    pub range_m: f64,
    pub rays: Vec<Ray>,
}

impl RayScan {
    pub fn empty(origin: Pose, range_m: f64) -> Self {
        Self {
            origin,
            range_m,
            rays: Vec::new(),
        }
    }
}

/// Amanatides-Woo traversal of the cells crossed by a ray.
///
/// Calls `visit(cell, t_enter)` for every in-bounds cell whose entry distance is
/// at most `max_dist`, in order; traversal stops when `visit` returns `true` or the
/// ray leaves the grid.
pub fn traverse_ray<F>(geom: &GridGeometry, origin: Vec2, angle: f64, max_dist: f64, mut visit: F)
where
    F: FnMut(usize, f64) -> bool,
{
    let c = geom.cell_size_m;
    let dir = Vec2::from_angle(angle);
    let mut ix = (origin.x / c).floor() as i64;
    let mut iy = (origin.y / c).floor() as i64;

    let axis = |o: f64, d: f64, i: i64| -> (i64, f64, f64) {
        if d > 1e-15 {
            (1, ((i + 1) as f64 * c - o) / d, c / d)
        } else if d < -1e-15 {
            (-1, (i as f64 * c - o) / d, -c / d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_x, mut t_max_x, t_delta_x) = axis(origin.x, dir.x, ix);
    let (step_y, mut t_max_y, t_delta_y) = axis(origin.y, dir.y, iy);

    let mut t = 0.0;
    loop {
        let Some(idx) = geom.index(ix, iy) else {
            return;
        };
        if visit(idx, t) {
            return;
        }
        if t_max_x < t_max_y {
            t = t_max_x;
            ix += step_x;
            t_max_x += t_delta_x;
        } else {
            t = t_max_y;
            iy += step_y;
            t_max_y += t_delta_y;
        }
        if t > max_dist {
            return;
        }
    }
}

/// Casts `n_rays` rays uniformly over 2π (world frame, starting at bearing 0).
///
/// Rays that leave the map or reach `range_m` without meeting an occupied cell
/// report `range_m` and no label.
pub fn sense(truth: &GroundTruthMap, pose: Pose, range_m: f64, n_rays: usize) -> Result<RayScan, GridError> {
    let geom = truth.geometry();
    if !geom.contains(pose.position) {
        return Err(GridError::PoseOutOfBounds {
            x: pose.position.x,
            y: pose.position.y,
        });
    }
    if !(range_m > 0.0 && range_m.is_finite()) {
        return Err(GridError::InvalidSensor(format!(
            "range must be positive, got {range_m}"
        )));
    }
    if n_rays < 8 {
        return Err(GridError::InvalidSensor(format!("need at least 8 rays, got {n_rays}")));
    }
    let rays = (0..n_rays)
        .map(|k| {
            let angle = crate::geometry::wrap_angle(2.0 * std::f64::consts::PI * k as f64 / n_rays as f64);
            let mut ray = Ray {
                angle,
                hit_distance_m: range_m,
                hit_label: None,
                hit_cell: None,
                free_cells: Vec::new(),
            };
            traverse_ray(geom, pose.position, angle, range_m, |idx, t| {
                if truth.is_occupied(idx) {
                    ray.hit_distance_m = t;
                    ray.hit_cell = Some(idx);
                    ray.hit_label = truth.label(idx).map(str::to_string);
                    true
                } else {
                    ray.free_cells.push(idx);
                    false
                }
            });
            ray
        })
        .collect();
    Ok(RayScan {
        origin: pose,
        range_m,
        rays,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{MapObject, MapSpec, Obstacle};

    fn empty_map(w: f64, h: f64, c: f64) -> MapSpec {
        MapSpec {
            width_m: w,
            height_m: h,
            cell_size_m: c,
            obstacles: vec![],
            objects: vec![],
            target_sites: vec![],
        }
    }

    /// Reference ray march: samples the ray every 1/200 of a cell.
    fn march(truth: &GroundTruthMap, origin: Vec2, angle: f64, range: f64) -> (f64, Option<usize>) {
        let g = truth.geometry();
        let step = g.cell_size_m / 200.0;
        let dir = Vec2::from_angle(angle);
        let mut t = 0.0;
        while t <= range {
            let p = origin + dir * t;
            match g.cell_of(p) {
                None => return (range, None),
                Some(idx) if truth.is_occupied(idx) => return (t, Some(idx)),
                _ => {}
            }
            t += step;
        }
        (range, None)
    }

    #[test]
    fn empty_map_reports_full_range() {
        let truth = GroundTruthMap::from_spec(&empty_map(40.0, 40.0, 0.5)).unwrap();
        let scan = sense(&truth, Pose::new(Vec2::new(20.0, 20.0), 0.3), 10.0, 64).unwrap();
        assert_eq!(scan.rays.len(), 64);
        for r in &scan.rays {
            assert_eq!(r.hit_distance_m, 10.0);
            assert!(r.hit_label.is_none());
        }
    }

    #[test]
    fn wall_due_east() {
        let mut spec = empty_map(20.0, 20.0, 0.5);
        // Wall cell whose near face is 3.0 m east of the robot at x = 5.0.
        spec.obstacles.push(Obstacle::Rect {
            x0: 8.1,
            y0: 5.1,
            x1: 8.4,
            y1: 5.4,
            label: None,
        });
        let truth = GroundTruthMap::from_spec(&spec).unwrap();
        let origin = Vec2::new(5.0, 5.25);
        let scan = sense(&truth, Pose::new(origin, 0.0), 10.0, 8).unwrap();
        let east = &scan.rays[0];
        assert_eq!(east.angle, 0.0);
        let (oracle, _) = march(&truth, origin, 0.0, 10.0);
        assert!((oracle - 3.0).abs() <= 0.5);
        assert!((east.hit_distance_m - 3.0).abs() <= 0.5);
        assert!((east.hit_distance_m - oracle).abs() <= 0.5 / 200.0 + 1e-9);
    }

    #[test]
    fn labeled_object_ahead() {
        let mut spec = empty_map(20.0, 20.0, 0.5);
        spec.objects.push(MapObject {
            label: "car".into(),
            x: 7.0,
            y: 5.0,
            radius_m: 0.5,
        });
        let truth = GroundTruthMap::from_spec(&spec).unwrap();
        let scan = sense(&truth, Pose::new(Vec2::new(5.0, 5.0), 0.0), 10.0, 360).unwrap();
        assert!(scan.rays.iter().any(|r| r.hit_label.as_deref() == Some("car")));
    }

    #[test]
    fn matches_reference_march_on_cluttered_map() {
        let mut spec = empty_map(30.0, 30.0, 0.5);
        for k in 0..12 {
            let x = 3.0 + (k as f64 * 7.3) % 24.0;
            let y = 2.0 + (k as f64 * 4.1) % 25.0;
            spec.obstacles.push(Obstacle::Circle {
                x,
                y,
                r: 0.8,
                label: None,
            });
        }
        let truth = GroundTruthMap::from_spec(&spec).unwrap();
        let origin = Vec2::new(15.13, 14.87);
        let scan = sense(&truth, Pose::new(origin, 0.0), 12.0, 97).unwrap();
        for ray in &scan.rays {
            let (d, cell) = march(&truth, origin, ray.angle, 12.0);
            assert!(
                (d - ray.hit_distance_m).abs() < 0.5 / 100.0,
                "angle {} dda {} march {}",
                ray.angle,
                ray.hit_distance_m,
                d
            );
            if ray.hit_distance_m < 11.9 {
                assert_eq!(cell, ray.hit_cell);
            }
        }
    }

    #[test]
    fn rejects_out_of_bounds_pose() {
        let truth = GroundTruthMap::from_spec(&empty_map(10.0, 10.0, 0.5)).unwrap();
        let err = sense(&truth, Pose::new(Vec2::new(-1.0, 2.0), 0.0), 5.0, 16).unwrap_err();
        assert!(err.to_string().contains("pose out of bounds"));
        assert!(sense(&truth, Pose::new(Vec2::new(1.0, 2.0), 0.0), 5.0, 4).is_err());
    }

    #[test]
    fn deterministic() {
        let truth = GroundTruthMap::from_spec(&empty_map(10.0, 10.0, 0.5)).unwrap();
        let pose = Pose::new(Vec2::new(3.3, 4.4), 1.0);
        assert_eq!(
            sense(&truth, pose, 5.0, 90).unwrap(),
            sense(&truth, pose, 5.0, 90).unwrap()
        );
    }
}
