use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::SimError;
use crate::config::Config;
use crate::geometry::Vec2;
use crate::gridworld::{GroundTruthMap, MapObject, MapSpec, Obstacle, Pose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeKind {
    FirstTime,
    ExperiencedSame,
    ExperiencedChanged,
}

impl EpisodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeKind::FirstTime => "first_time",
            EpisodeKind::ExperiencedSame => "experienced_same",
            EpisodeKind::ExperiencedChanged => "experienced_changed",
        }
    }

    pub fn is_experienced(self) -> bool {
        self != EpisodeKind::FirstTime
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapGenerator {
    /// 60 m × 40 m at 0.5 m cells.
    #[default]
    Desk,
    /// 320 m × 210 m at 0.5 m cells.
    Campus,
}

/// One search episode description.
///
/// The world comes from `map_file` (relative paths resolve against the
/// scenario file), an inline `map`, or, when both are absent, the seeded
/// `generator`. `target_site` places the target object at one of the map's
/// target sites, replacing any objects already carrying the target label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
    #[serde(default)]
    pub generator: MapGenerator,
    pub target_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot_start: Option<Pose>,
    pub episode_kind: EpisodeKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_site: Option<usize>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub overrides: Value,
}

/// A scenario with its world built and its configuration patched.
#[derive(Clone, Debug)]
pub struct ResolvedScenario {
    pub scenario: Scenario,
    pub spec: MapSpec,
    pub truth: GroundTruthMap,
    pub start: Pose,
    pub config: Config,
}

/// Radius of generated target objects.
pub const TARGET_RADIUS_M: f64 = 0.5;

impl Scenario {
    /// A generated desk-map scenario.
    pub fn generated(target_label: &str, kind: EpisodeKind, seed: u64, target_site: usize) -> Self {
        Self {
            map_file: None,
            map: None,
            generator: MapGenerator::Desk,
            target_label: target_label.to_string(),
            robot_start: None,
            episode_kind: kind,
            seed,
            target_site: Some(target_site),
            overrides: Value::Null,
        }
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(path.to_path_buf(), e))?;
        let mut s: Scenario =
            serde_json::from_str(&text).map_err(|e| SimError::Scenario(format!("{}: {e}", path.display())))?;
        if let (Some(file), Some(dir)) = (&s.map_file, path.parent()) {
            if file.is_relative() {
                s.map_file = Some(dir.join(file));
            }
        }
        Ok(s)
    }

    /// Builds the world and checks every scenario invariant.
    pub fn resolve(&self, base: &Config) -> Result<ResolvedScenario, SimError> {
        let config = base.with_overrides(&self.overrides)?;
        config.validate()?;
        let (mut spec, default_start) = match (&self.map_file, &self.map) {
            (Some(_), Some(_)) => {
                return Err(SimError::Scenario("give either map_file or map, not both".into()));
            }
            (Some(file), None) => (
                MapSpec::load(file).map_err(|e| SimError::Scenario(format!("map_file {}: {e}", file.display())))?,
                None,
            ),
            (None, Some(map)) => (map.clone(), None),
            (None, None) => {
                let (spec, start) = generate_map(self.generator, self.seed)?;
                (spec, Some(start))
            }
        };
        if let Some(site) = self.target_site {
            let p = *spec.target_sites.get(site).ok_or_else(|| {
                SimError::Scenario(format!(
                    "target_site: index {site} out of range, map has {} sites",
                    spec.target_sites.len()
                ))
            })?;
            spec.objects.retain(|o| o.label != self.target_label);
            spec.objects.push(MapObject {
                label: self.target_label.clone(),
                x: p.x,
                y: p.y,
                radius_m: TARGET_RADIUS_M,
            });
        }
        let truth = GroundTruthMap::from_spec(&spec).map_err(|e| SimError::Scenario(format!("map: {e}")))?;
        let start = self
            .robot_start
            .or(default_start)
            .ok_or_else(|| SimError::Scenario("robot_start: required for file and inline maps".into()))?;
        let start = Pose::new(start.position, start.heading);
        if !truth.geometry().contains(start.position) {
            return Err(SimError::Scenario("robot_start: start pose is outside the map".into()));
        }
        if !truth.is_free(start.position) {
            return Err(SimError::Scenario(
                "robot_start: start pose is inside an obstacle (start must be on a free cell)".into(),
            ));
        }
        Ok(ResolvedScenario {
            scenario: self.clone(),
            spec,
            truth,
            start,
            config,
        })
    }
}

struct Layout {
    width: f64,
    height: f64,
    buildings: usize,
    trees: usize,
    signs: usize,
    site_min_start_m: f64,
    site_min_gap_m: f64,
}

fn layout(kind: MapGenerator) -> Layout {
    match kind {
        MapGenerator::Desk => Layout {
            width: 60.0,
            height: 40.0,
            buildings: 7,
            trees: 12,
            signs: 2,
            site_min_start_m: 25.0,
            site_min_gap_m: 15.0,
        },
        MapGenerator::Campus => Layout {
            width: 320.0,
            height: 210.0,
            buildings: 60,
            trees: 150,
            signs: 12,
            site_min_start_m: 100.0,
            site_min_gap_m: 60.0,
        },
    }
}

const CELL: f64 = 0.5;

/// Snaps a coordinate to the nearest cell center.
fn snap(v: f64) -> f64 {
    (v / CELL).floor() * CELL + CELL / 2.0
}

fn rect_distance(p: Vec2, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let dx = (x0 - p.x).max(0.0).max(p.x - x1);
    let dy = (y0 - p.y).max(0.0).max(p.y - y1);
    dx.hypot(dy)
}

/// Seeded map with perimeter walls, buildings, trees, two target sites
/// (each with a parking sign nearby) and a start pose. The start reaches
/// both sites.
pub fn generate_map(kind: MapGenerator, seed: u64) -> Result<(MapSpec, Pose), SimError> {
    let l = layout(kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        if let Some(found) = try_generate(&l, &mut rng) {
            return Ok(found);
        }
    }
    Err(SimError::Scenario(format!(
        "could not generate a connected map for seed {seed}"
    )))
}

fn try_generate(l: &Layout, rng: &mut ChaCha8Rng) -> Option<(MapSpec, Pose)> {
    let (w, h) = (l.width, l.height);
    let wall = |x0, y0, x1, y1| Obstacle::Rect {
        x0,
        y0,
        x1,
        y1,
        label: Some("wall".into()),
    };
    let mut obstacles = vec![
        wall(0.0, 0.0, w, CELL),
        wall(0.0, h - CELL, w, h),
        wall(0.0, 0.0, CELL, h),
        wall(w - CELL, 0.0, w, h),
    ];
    let start = Vec2::new(snap(rng.gen_range(3.0..w * 0.15)), snap(rng.gen_range(3.0..h - 3.0)));
    let mut sites: Vec<Vec2> = Vec::new();
    let mut tries = 0;
    while sites.len() < 2 {
        tries += 1;
        if tries > 500 {
            return None;
        }
        let p = Vec2::new(snap(rng.gen_range(w * 0.3..w - 4.0)), snap(rng.gen_range(4.0..h - 4.0)));
        if p.distance(start) >= l.site_min_start_m && sites.iter().all(|s| s.distance(p) >= l.site_min_gap_m) {
            sites.push(p);
        }
    }
    let keep_clear: Vec<Vec2> = std::iter::once(start).chain(sites.iter().copied()).collect();
    let mut placed = 0;
    let mut tries = 0;
    while placed < l.buildings && tries < 1000 {
        tries += 1;
        let bw = rng.gen_range(3.0..9.0_f64).round();
        let bh = rng.gen_range(3.0..9.0_f64).round();
        let x0 = rng.gen_range(3.0..w - 3.0 - bw).round();
        let y0 = rng.gen_range(3.0..h - 3.0 - bh).round();
        let (x1, y1) = (x0 + bw, y0 + bh);
        if keep_clear.iter().any(|&p| rect_distance(p, x0, y0, x1, y1) < 3.0) {
            continue;
        }
        obstacles.push(Obstacle::Rect {
            x0,
            y0,
            x1,
            y1,
            label: Some("building".into()),
        });
        placed += 1;
    }
    let mut placed = 0;
    let mut tries = 0;
    while placed < l.trees && tries < 1000 {
        tries += 1;
        let c = Vec2::new(rng.gen_range(2.0..w - 2.0), rng.gen_range(2.0..h - 2.0));
        let r = rng.gen_range(0.4..0.9);
        if keep_clear.iter().any(|&p| p.distance(c) < r + 2.5) {
            continue;
        }
        obstacles.push(Obstacle::Circle {
            x: c.x,
            y: c.y,
            r,
            label: Some("tree".into()),
        });
        placed += 1;
    }
    let mut spec = MapSpec {
        width_m: w,
        height_m: h,
        cell_size_m: CELL,
        obstacles,
        objects: Vec::new(),
        target_sites: sites.clone(),
    };
    // A parking sign two meters from every site, plus a few elsewhere.
    let mut signs: Vec<Vec2> = Vec::new();
    for s in &sites {
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        signs.push(Vec2::new(snap(s.x + 2.0 * a.cos()), snap(s.y + 2.0 * a.sin())));
    }
    for _ in 0..l.signs {
        signs.push(Vec2::new(
            snap(rng.gen_range(3.0..w - 3.0)),
            snap(rng.gen_range(3.0..h - 3.0)),
        ));
    }
    for p in signs {
        spec.objects.push(MapObject {
            label: "parking_sign".into(),
            x: p.x,
            y: p.y,
            radius_m: 0.25,
        });
        if GroundTruthMap::from_spec(&spec).is_err() || p.distance(start) < 2.0 {
            spec.objects.pop();
        }
    }
    // Every site must be reachable with the target present at either site.
    let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    for site in &sites {
        let mut with_target = spec.clone();
        with_target.objects.push(MapObject {
            label: "target".into(),
            x: site.x,
            y: site.y,
            radius_m: TARGET_RADIUS_M,
        });
        let truth = GroundTruthMap::from_spec(&with_target).ok()?;
        if !truth.is_free(start) {
            return None;
        }
        let reach = truth.reachable_from(start);
        let geom = truth.geometry();
        for other in &sites {
            // The approach cell next to each site must be reachable.
            let approach = geom.cells_within(*other, 1.5);
            if !approach.iter().any(|&c| reach[c]) {
                return None;
            }
        }
    }
    Some((spec, Pose::new(start, heading)))
}
