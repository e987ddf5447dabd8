use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::PlannerError;
use crate::dout::{SegmentMeasurement, SegmentSummary};
use crate::geometry::wrap_angle;
use crate::gridworld::{region_overlap_ratio, sense, ExploredRegion, GroundTruthMap, Pose, RayScan};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedSegment {
    pub index: usize,
    /// World-frame bearing of the wedge center.
    pub center_angle: f64,
    /// Labels of distinct hit cells in the wedge, with counts.
    pub labels: BTreeMap<String, u32>,
    /// Nearest hit inside the wedge, or the sensor range.
    pub free_depth_m: f64,
    /// Free cells the wedge's rays passed through, sorted.
    pub wedge_cells: Vec<usize>,
}

/// The surround view split into `n = 2k + 1` equal wedges, with the robot's
/// heading at the middle of wedge `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanoramaObservation {
    pub pose: Pose,
    pub segments: Vec<ObservedSegment>,
}

impl PanoramaObservation {
    pub fn n(&self) -> usize {
        self.segments.len()
    }

    pub fn summaries(&self) -> Vec<SegmentSummary> {
        self.segments
            .iter()
            .map(|s| SegmentSummary {
                index: s.index,
                center_angle: s.center_angle,
                labels: s.labels.clone(),
                free_depth_m: s.free_depth_m,
            })
            .collect()
    }

    /// Advisory-criteria inputs: depth, overlap with explored ground, bearing.
    pub fn measurements(&self, explored: &ExploredRegion) -> Vec<SegmentMeasurement> {
        self.segments
            .iter()
            .map(|s| SegmentMeasurement {
                free_depth_m: s.free_depth_m,
                overlap: region_overlap_ratio(explored, &s.wedge_cells),
                heading: s.center_angle,
            })
            .collect()
    }
}

fn check_n(n: usize) -> Result<(), PlannerError> {
    if n < 3 || n.is_multiple_of(2) {
        return Err(PlannerError::InvalidSegmentCount(n));
    }
    Ok(())
}

/// Wedge containing world bearing `angle` for a robot facing `heading`.
pub fn segment_of(angle: f64, heading: f64, n: usize) -> usize {
    let width = TAU / n as f64;
    let mid = (n / 2) as i64;
    let offset = (wrap_angle(angle - heading) / width).round() as i64;
    (offset + mid).rem_euclid(n as i64) as usize
}

/// Buckets an existing scan into panorama wedges.
pub fn observation_from_scan(scan: &RayScan, n: usize) -> Result<PanoramaObservation, PlannerError> {
    check_n(n)?;
    let pose = scan.origin;
    let width = TAU / n as f64;
    let mid = n / 2;
    let mut depth = vec![scan.range_m; n];
    let mut hit_cells: Vec<BTreeMap<usize, Option<&str>>> = vec![BTreeMap::new(); n];
    let mut free: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for ray in &scan.rays {
        let s = segment_of(ray.angle, pose.heading, n);
        if ray.hit_cell.is_some() {
            depth[s] = depth[s].min(ray.hit_distance_m);
        }
        if let Some(cell) = ray.hit_cell {
            hit_cells[s].insert(cell, ray.hit_label.as_deref());
        }
        free[s].extend(ray.free_cells.iter().copied());
    }
    let segments = (0..n)
        .map(|i| {
            let mut labels = BTreeMap::new();
            for label in hit_cells[i].values().flatten() {
                *labels.entry(label.to_string()).or_insert(0) += 1;
            }
            ObservedSegment {
                index: i,
                center_angle: wrap_angle(pose.heading + (i as f64 - mid as f64) * width),
                labels,
                free_depth_m: depth[i],
                wedge_cells: free[i].iter().copied().collect(),
            }
        })
        .collect();
    Ok(PanoramaObservation { pose, segments })
}

/// Senses at `pose` and buckets the scan. Returns the scan too so the caller
/// can fuse it into its grid.
pub fn build_observation(
    truth: &GroundTruthMap,
    pose: Pose,
    n: usize,
    sensor_range_m: f64,
    n_rays: usize,
) -> Result<(PanoramaObservation, RayScan), PlannerError> {
    check_n(n)?;
    let scan = sense(truth, pose, sensor_range_m, n_rays)?;
    let obs = observation_from_scan(&scan, n)?;
    Ok((obs, scan))
}
