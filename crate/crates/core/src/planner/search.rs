use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    candidate_targets, frontier_clusters, observation_from_scan, order_goals, plan_experienced, smooth_path,
    ExperiencedPlan, LocalTarget, Mode, PlannerError,
};
use crate::config::Config;
use crate::dout::{reason_cycle, FeedbackRecord, Proposer, ProposerRequest};
use crate::geometry::Vec2;
use crate::gridworld::{
    sense, traverse_ray, CellState, ExploredRegion, GridError, GroundTruthMap, MapObject, Navigator, Pose, RayScan,
    SemanticGrid,
};
use crate::taskmap::TaskProbabilityMap;

/// Feedback records carried into the next reasoning cycle's request.
const FEEDBACK_KEEP: usize = 8;
/// Frontier goals considered per coverage decision.
const MAX_FRONTIER_GOALS: usize = 12;
/// Zero-progress attempts before a tour node is skipped.
const MAX_NODE_ATTEMPTS: usize = 3;
/// Search radius for snapping remembered locations and frontiers to passable cells.
const SNAP_RADIUS_M: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Found,
    Exhausted,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TourProgress {
    pub plan: ExperiencedPlan,
    /// Position in `plan.tour.order` of the node being approached.
    pub cursor: usize,
    attempts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub mode: Mode,
    pub pose: Pose,
    /// Heading of the last movement, θ_{t−1} of the direction criterion.
    pub prev_heading: f64,
    pub tour: Option<TourProgress>,
    pub found: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decision {
    Start {
        target_label: String,
    },
    Reasoning {
        proposal: Vec<usize>,
        ranked: Vec<usize>,
        scores: Vec<f64>,
        calls: usize,
        target: Option<LocalTarget>,
        traveled_m: f64,
    },
    TourPlanned {
        goals: Vec<Vec2>,
        weights: Vec<f64>,
        cost: f64,
        discounted: bool,
    },
    Tour {
        node: usize,
        goal: Vec2,
        traveled_m: f64,
    },
    SkipNode {
        node: usize,
        reason: String,
    },
    Coverage {
        frontiers: usize,
        goal: Vec2,
        traveled_m: f64,
    },
    ModeSwitch {
        from: Mode,
        to: Mode,
        reason: String,
    },
    Found {
        label: String,
        position: Vec2,
    },
    Exhausted {
        reason: String,
    },
    Error {
        message: String,
    },
}

/// One line of the JSON-lines search trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Decision step at which the event happened.
    pub t: usize,
    /// Simulated time at constant speed.
    pub time_s: f64,
    pub pose: Pose,
    pub mode: Mode,
    pub decision: Decision,
    /// Cumulative proposer calls.
    pub proposer_calls: usize,
    pub path_len_so_far: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub waypoints: Vec<Vec2>,
}

pub struct SearchSetup<'a> {
    pub truth: &'a GroundTruthMap,
    pub config: &'a Config,
    pub target_label: String,
    pub start: Pose,
    /// Prior map for experienced runs; a blank grid is used otherwise.
    pub grid: Option<SemanticGrid>,
    pub taskmap: Option<&'a TaskProbabilityMap>,
    pub start_mode: Mode,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub events: Vec<TraceEvent>,
    pub outcome: Outcome,
    pub message: Option<String>,
    pub path_length_m: f64,
    pub steps: usize,
    pub proposer_calls: usize,
    pub found_object: Option<MapObject>,
    /// Every pose position in order, corners included.
    pub trajectory: Vec<Vec2>,
    pub grid: SemanticGrid,
}

enum Flow {
    Done,
    Switch(Mode, String),
    Terminal(Outcome, String),
}

struct Exec {
    traveled: f64,
    reached: bool,
}

/// Runs one search episode step by step.
pub struct Searcher<'a> {
    truth: &'a GroundTruthMap,
    config: &'a Config,
    target_label: String,
    taskmap: Option<&'a TaskProbabilityMap>,
    grid: SemanticGrid,
    explored: ExploredRegion,
    state: SearchState,
    last_scan: RayScan,
    feedback: Vec<FeedbackRecord>,
    cycles: usize,
    events: Vec<TraceEvent>,
    trajectory: Vec<Vec2>,
    path_len: f64,
    steps: usize,
    proposer_calls: usize,
    reachable_cells: usize,
    stall: usize,
    blacklist: BTreeSet<usize>,
    evidence_seen: usize,
    evidence_grace: usize,
    outcome: Option<(Outcome, Option<String>)>,
    found_object: Option<MapObject>,
}

impl<'a> Searcher<'a> {
    pub fn new(setup: SearchSetup<'a>) -> Result<Self, PlannerError> {
        let SearchSetup {
            truth,
            config,
            target_label,
            start,
            grid,
            taskmap,
            start_mode,
        } = setup;
        let geom = *truth.geometry();
        let grid = match grid {
            Some(g) if *g.geometry() != geom => {
                return Err(GridError::InvalidMap("memory grid geometry differs from the map".into()).into())
            }
            Some(g) => g,
            None => SemanticGrid::new(geom, config.occupancy),
        };
        if !truth.is_free(start.position) {
            return Err(GridError::StartBlocked {
                x: start.position.x,
                y: start.position.y,
            }
            .into());
        }
        let reachable_cells = truth.reachable_from(start.position).iter().filter(|&&r| r).count();
        let mut explored = ExploredRegion::new(geom, config.search.roadmap_radius_m);
        explored.visit(start.position);
        let mut s = Self {
            truth,
            config,
            target_label,
            taskmap,
            grid,
            explored,
            state: SearchState {
                mode: start_mode,
                pose: start,
                prev_heading: start.heading,
                tour: None,
                found: false,
            },
            last_scan: RayScan::empty(start, config.search.sensor_range_m),
            feedback: Vec::new(),
            cycles: 0,
            events: Vec::new(),
            trajectory: vec![start.position],
            path_len: 0.0,
            steps: 0,
            proposer_calls: 0,
            reachable_cells: reachable_cells.max(1),
            stall: 0,
            blacklist: BTreeSet::new(),
            evidence_seen: 0,
            evidence_grace: 0,
            outcome: None,
            found_object: None,
        };
        s.emit(
            Decision::Start {
                target_label: s.target_label.clone(),
            },
            Vec::new(),
        );
        s.sense_here()?;
        s.finish_if_found();
        Ok(s)
    }

    pub fn state(&self) -> &SearchState {
        &self.state
    }

    pub fn grid(&self) -> &SemanticGrid {
        &self.grid
    }

    pub fn explored(&self) -> &ExploredRegion {
        &self.explored
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn path_length_m(&self) -> f64 {
        self.path_len
    }

    pub fn is_done(&self) -> bool {
        self.outcome.is_some()
    }

    /// Fraction of the start's reachable free space covered so far.
    pub fn coverage_fraction(&self) -> f64 {
        (self.explored.covered_count() as f64 / self.reachable_cells as f64).min(1.0)
    }

    /// Makes one decision. Returns true once the episode has ended.
    pub fn step(&mut self, proposer: &mut dyn Proposer) -> bool {
        if self.is_done() {
            return true;
        }
        if self.steps >= self.config.search.max_steps {
            self.terminate(Outcome::Exhausted, "step budget exhausted".into());
            return true;
        }
        self.steps += 1;
        // A step may hop through a few mode switches before moving.
        for _ in 0..4 {
            let flow = match self.state.mode {
                Mode::Reasoning => self.reasoning_step(proposer),
                Mode::ExperiencedTour => self.experienced_step(),
                Mode::CoverageFallback => self.coverage_step(),
            };
            match flow {
                Ok(Flow::Done) => break,
                Ok(Flow::Switch(to, reason)) => self.switch(to, reason),
                Ok(Flow::Terminal(outcome, reason)) => {
                    self.terminate(outcome, reason);
                    return true;
                }
                Err(e) => {
                    self.terminate(Outcome::Error, e.to_string());
                    return true;
                }
            }
            if self.state.found {
                break;
            }
        }
        self.finish_if_found();
        self.is_done()
    }

    pub fn run(mut self, proposer: &mut dyn Proposer) -> SearchResult {
        while !self.step(proposer) {}
        self.into_result()
    }

    pub fn into_result(self) -> SearchResult {
        let (outcome, message) = self.outcome.unwrap_or((Outcome::Exhausted, None));
        SearchResult {
            events: self.events,
            outcome,
            message,
            path_length_m: self.path_len,
            steps: self.steps,
            proposer_calls: self.proposer_calls,
            found_object: self.found_object,
            trajectory: self.trajectory,
            grid: self.grid,
        }
    }

    fn emit(&mut self, decision: Decision, waypoints: Vec<Vec2>) {
        self.events.push(TraceEvent {
            t: self.steps,
            time_s: self.path_len / self.config.search.speed_mps,
            pose: self.state.pose,
            mode: self.state.mode,
            decision,
            proposer_calls: self.proposer_calls,
            path_len_so_far: self.path_len,
            waypoints,
        });
    }

    fn switch(&mut self, to: Mode, reason: String) {
        let from = self.state.mode;
        if to == Mode::CoverageFallback {
            self.evidence_seen = self.target_evidence();
        }
        if to != Mode::ExperiencedTour {
            self.state.tour = None;
        }
        self.emit(Decision::ModeSwitch { from, to, reason }, Vec::new());
        self.state.mode = to;
    }

    fn terminate(&mut self, outcome: Outcome, reason: String) {
        let decision = match outcome {
            Outcome::Error => Decision::Error {
                message: reason.clone(),
            },
            _ => Decision::Exhausted { reason: reason.clone() },
        };
        self.emit(decision, Vec::new());
        self.outcome = Some((outcome, Some(reason)));
    }

    fn finish_if_found(&mut self) {
        if self.state.found && self.outcome.is_none() {
            let obj = self.found_object.clone().expect("found implies an object");
            self.emit(
                Decision::Found {
                    label: obj.label.clone(),
                    position: obj.position(),
                },
                Vec::new(),
            );
            self.outcome = Some((Outcome::Found, None));
        }
    }

    fn target_evidence(&self) -> usize {
        self.grid
            .query_label_locations(&self.target_label, self.config.search.label_belief_threshold)
            .len()
    }

    fn navigator(&self) -> Navigator<'_> {
        Navigator::new(
            &self.grid,
            self.config.search.robot_radius_m,
            self.config.search.unknown_cost_factor,
        )
    }

    /// Senses at the current pose, fuses the scan and checks for the target.
    fn sense_here(&mut self) -> Result<(), PlannerError> {
        let s = &self.config.search;
        let scan = sense(self.truth, self.state.pose, s.sensor_range_m, s.rays)?;
        self.grid.integrate_scan(&scan, &mut self.explored);
        if !self.state.found {
            if let Some(obj) = self.detect(&scan) {
                self.state.found = true;
                self.found_object = Some(obj);
            }
        }
        self.last_scan = scan;
        Ok(())
    }

    /// A target-labeled cell hit within detection range whose fused argmax
    /// label is the target.
    fn detect(&self, scan: &RayScan) -> Option<MapObject> {
        let geom = self.truth.geometry();
        let range = self.config.search.detection_range_m;
        let hit = scan.rays.iter().find_map(|ray| {
            let cell = ray.hit_cell?;
            (ray.hit_distance_m <= range
                && self.truth.label(cell) == Some(self.target_label.as_str())
                && self
                    .grid
                    .argmax_label(cell)
                    .is_some_and(|(l, _)| l == self.target_label))
            .then_some(cell)
        })?;
        let at = geom.center(hit);
        self.truth
            .objects()
            .iter()
            .filter(|o| o.label == self.target_label)
            .min_by(|a, b| a.position().distance(at).total_cmp(&b.position().distance(at)))
            .cloned()
    }

    /// Straight segment when clear, else a smoothed A* path.
    fn plan_path(&self, nav: &Navigator, goal: Vec2) -> Result<Option<Vec<Vec2>>, PlannerError> {
        let from = self.state.pose.position;
        let start_cell = nav.geometry().cell_of(from);
        if nav.segment_clear(from, goal, start_cell) {
            return Ok(Some(vec![from, goal]));
        }
        Ok(nav.astar(from, goal)?.map(|p| smooth_path(&p.waypoints, nav)))
    }

    /// Whether the robot may drive `a → b` now: every crossed cell (except the
    /// one it stands on) must be observed free and passable.
    fn drivable(&self, nav: &Navigator, a: Vec2, b: Vec2) -> bool {
        let geom = *self.grid.geometry();
        let here = geom.cell_of(self.state.pose.position);
        let ok_cell = |idx: usize| {
            Some(idx) == here
                || (self.grid.is_observed(idx) && self.grid.state(idx) == CellState::Free && nav.passable(idx))
        };
        let Some(end) = geom.cell_of(b) else {
            return false;
        };
        let mut ok = true;
        if a.distance(b) > 0.0 {
            traverse_ray(&geom, a, (b - a).angle(), a.distance(b), |idx, _| {
                if !ok_cell(idx) {
                    ok = false;
                }
                !ok
            });
        }
        ok && ok_cell(end)
    }

    /// Drives along `path` (starting at the current pose) for at most
    /// `budget` meters, sensing every `sense_interval_m`. Stops early when the
    /// target is found or the next stretch is not drivable.
    fn execute(&mut self, path: &[Vec2], budget: f64) -> Result<Exec, PlannerError> {
        let interval = self.config.search.sense_interval_m;
        let mut traveled = 0.0;
        let mut next = 1;
        while next < path.len() {
            if traveled >= budget - 1e-9 || self.state.found {
                return Ok(Exec {
                    traveled,
                    reached: false,
                });
            }
            let mut left = interval.min(budget - traveled);
            let mut pos = self.state.pose.position;
            let mut pieces = Vec::new();
            let mut k = next;
            while left > 1e-12 && k < path.len() {
                let d = pos.distance(path[k]);
                if d <= left {
                    left -= d;
                    pos = path[k];
                    pieces.push(pos);
                    k += 1;
                } else {
                    pos = pos.lerp(path[k], left / d);
                    pieces.push(pos);
                    left = 0.0;
                }
            }
            let clear = {
                let nav = self.navigator();
                let mut from = self.state.pose.position;
                pieces.iter().all(|&p| {
                    let ok = self.drivable(&nav, from, p);
                    from = p;
                    ok
                })
            };
            if !clear {
                return Ok(Exec {
                    traveled,
                    reached: false,
                });
            }
            let mut prev = self.state.pose.position;
            let mut heading = self.state.pose.heading;
            for &p in &pieces {
                let d = prev.distance(p);
                if d > 1e-12 {
                    heading = (p - prev).angle();
                    self.path_len += d;
                    traveled += d;
                    self.explored.visit_polyline(&[prev, p]);
                    self.trajectory.push(p);
                }
                prev = p;
            }
            self.state.pose = Pose::new(prev, heading);
            self.state.prev_heading = self.state.pose.heading;
            next = k;
            self.sense_here()?;
        }
        Ok(Exec {
            traveled,
            reached: true,
        })
    }

    fn reasoning_step(&mut self, proposer: &mut dyn Proposer) -> Result<Flow, PlannerError> {
        let cfg = self.config;
        if self.evidence_grace > 0 {
            self.evidence_grace -= 1;
        } else {
            if self.coverage_fraction() >= cfg.search.coverage_threshold {
                return Ok(Flow::Switch(
                    Mode::CoverageFallback,
                    "coverage threshold reached".into(),
                ));
            }
            if self.stall >= cfg.search.stall_steps {
                self.stall = 0;
                return Ok(Flow::Switch(Mode::CoverageFallback, "reasoning stalled".into()));
            }
        }
        let obs = observation_from_scan(&self.last_scan, cfg.search.segments)?;
        let measurements = obs.measurements(&self.explored);
        let mut request = ProposerRequest {
            task_description: format!("Find the {} as quickly as possible.", self.target_label),
            target_label: self.target_label.clone(),
            segments: obs.summaries(),
            feedback_history: self.feedback.clone(),
            cycle: self.cycles,
        };
        let outcome = reason_cycle(
            proposer,
            &mut request,
            &measurements,
            self.state.prev_heading,
            &cfg.criteria,
        );
        self.cycles += 1;
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                if let crate::dout::DoutError::MandatoryExhausted { calls, .. } = &e {
                    self.proposer_calls += calls;
                }
                return Err(e.into());
            }
        };
        self.proposer_calls += outcome.proposer_calls;
        self.feedback.extend(outcome.feedback.iter().cloned());
        let excess = self.feedback.len().saturating_sub(FEEDBACK_KEEP);
        self.feedback.drain(..excess);

        let chosen = {
            let nav = self.navigator();
            let candidates = candidate_targets(
                &outcome.ranked,
                &obs,
                &nav,
                cfg.search.min_travel_m,
                cfg.criteria.safe_distance_m,
            )?;
            let mut chosen = None;
            for c in candidates {
                if let Some(path) = self.plan_path(&nav, c.position)? {
                    chosen = Some((c, path));
                    break;
                }
            }
            chosen
        };
        let covered_before = self.explored.covered_count();
        let Some((target, path)) = chosen else {
            self.emit(
                Decision::Reasoning {
                    proposal: outcome.proposal.order,
                    ranked: outcome.ranked.order,
                    scores: outcome.ranked.scores,
                    calls: outcome.proposer_calls,
                    target: None,
                    traveled_m: 0.0,
                },
                Vec::new(),
            );
            return Ok(Flow::Switch(Mode::CoverageFallback, "no viable direction".into()));
        };
        let exec = self.execute(&path, cfg.search.replan_distance_m)?;
        let gain = self.explored.covered_count() - covered_before;
        if gain < cfg.search.stall_min_new_cells || exec.traveled < 1e-9 {
            self.stall += 1;
        } else {
            self.stall = 0;
        }
        self.emit(
            Decision::Reasoning {
                proposal: outcome.proposal.order,
                ranked: outcome.ranked.order,
                scores: outcome.ranked.scores,
                calls: outcome.proposer_calls,
                target: Some(target),
                traveled_m: exec.traveled,
            },
            path,
        );
        Ok(Flow::Done)
    }

    fn experienced_step(&mut self) -> Result<Flow, PlannerError> {
        let cfg = self.config;
        if self.state.tour.is_none() {
            let plan = {
                let nav = self.navigator();
                plan_experienced(
                    self.taskmap,
                    &nav,
                    &self.target_label,
                    self.state.pose.position,
                    cfg.memory.beta,
                    cfg.search.label_belief_threshold,
                    SNAP_RADIUS_M,
                )?
            };
            let order = &plan.tour.order[1..];
            self.emit(
                Decision::TourPlanned {
                    goals: plan.ordered_goals(),
                    weights: order.iter().map(|&i| plan.weights[i]).collect(),
                    cost: plan.tour.cost,
                    discounted: plan.discounted,
                },
                Vec::new(),
            );
            if plan.is_empty() {
                return Ok(Flow::Switch(Mode::Reasoning, "no remembered locations".into()));
            }
            self.state.tour = Some(TourProgress {
                plan,
                cursor: 1,
                attempts: 0,
            });
        }
        loop {
            let tp = self.state.tour.as_ref().expect("tour present in experienced mode");
            if tp.cursor >= tp.plan.tour.order.len() {
                return Ok(Flow::Switch(Mode::Reasoning, "tour exhausted".into()));
            }
            let node = tp.plan.tour.order[tp.cursor];
            let goal = tp.plan.goals[node];
            let attempts = tp.attempts;
            if self.state.pose.position.distance(goal) <= cfg.search.tour_reach_m {
                self.advance_tour();
                continue;
            }
            if attempts >= MAX_NODE_ATTEMPTS {
                self.emit(
                    Decision::SkipNode {
                        node,
                        reason: "no progress".into(),
                    },
                    Vec::new(),
                );
                self.advance_tour();
                continue;
            }
            let path = {
                let nav = self.navigator();
                self.plan_path(&nav, goal)?
            };
            let Some(path) = path else {
                self.emit(
                    Decision::SkipNode {
                        node,
                        reason: "unreachable".into(),
                    },
                    Vec::new(),
                );
                self.advance_tour();
                continue;
            };
            let exec = self.execute(&path, cfg.search.replan_distance_m)?;
            if exec.reached {
                self.advance_tour();
            } else if let Some(tp) = self.state.tour.as_mut() {
                tp.attempts = if exec.traveled < 1e-9 { tp.attempts + 1 } else { 0 };
            }
            self.emit(
                Decision::Tour {
                    node,
                    goal,
                    traveled_m: exec.traveled,
                },
                path,
            );
            return Ok(Flow::Done);
        }
    }

    fn advance_tour(&mut self) {
        if let Some(tp) = self.state.tour.as_mut() {
            tp.cursor += 1;
            tp.attempts = 0;
        }
    }

    fn coverage_step(&mut self) -> Result<Flow, PlannerError> {
        let cfg = self.config;
        let evidence = self.target_evidence();
        if evidence > self.evidence_seen {
            self.evidence_seen = evidence;
            self.evidence_grace = cfg.search.stall_steps;
            self.stall = 0;
            return Ok(Flow::Switch(Mode::Reasoning, "new target evidence".into()));
        }
        let mut clusters = frontier_clusters(&self.grid, &self.explored);
        // Largest first; the sort is stable so ties keep discovery order.
        clusters.sort_by_key(|c| std::cmp::Reverse(c.cells.len()));
        let planned = {
            let nav = self.navigator();
            let geom = *nav.geometry();
            let mut goals = Vec::new();
            for c in &clusters {
                let Some(g) = nav.nearest_passable(c.representative, SNAP_RADIUS_M) else {
                    continue;
                };
                let cell = geom.cell_of(g).expect("passable point is on the map");
                if self.blacklist.contains(&cell) || goals.contains(&g) {
                    continue;
                }
                goals.push(g);
                if goals.len() == MAX_FRONTIER_GOALS {
                    break;
                }
            }
            if goals.is_empty() {
                None
            } else {
                let (order, _) = order_goals(&nav, self.state.pose.position, &goals)?;
                let goal = goals[order[0]];
                Some((goal, geom.cell_of(goal).expect("on map"), self.plan_path(&nav, goal)?))
            }
        };
        let Some((goal, goal_cell, path)) = planned else {
            return Ok(Flow::Terminal(
                Outcome::Exhausted,
                "search exhausted, target absent".into(),
            ));
        };
        let Some(path) = path else {
            self.blacklist.insert(goal_cell);
            self.emit(
                Decision::Coverage {
                    frontiers: clusters.len(),
                    goal,
                    traveled_m: 0.0,
                },
                Vec::new(),
            );
            return Ok(Flow::Done);
        };
        let exec = self.execute(&path, cfg.search.replan_distance_m)?;
        if exec.reached || exec.traveled < 1e-9 {
            self.blacklist.insert(goal_cell);
        }
        self.emit(
            Decision::Coverage {
                frontiers: clusters.len(),
                goal,
                traveled_m: exec.traveled,
            },
            path,
        );
        Ok(Flow::Done)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dout::ScriptedProposer;
    use crate::geometry::polyline_length;
    use crate::gridworld::{MapSpec, Obstacle};

    fn walled(objects: Vec<MapObject>, extra: Vec<Obstacle>) -> GroundTruthMap {
        let mut obstacles = vec![
            Obstacle::Rect {
                x0: 0.0,
                y0: 0.0,
                x1: 30.0,
                y1: 0.5,
                label: Some("wall".into()),
            },
            Obstacle::Rect {
                x0: 0.0,
                y0: 19.5,
                x1: 30.0,
                y1: 20.0,
                label: Some("wall".into()),
            },
            Obstacle::Rect {
                x0: 0.0,
                y0: 0.0,
                x1: 0.5,
                y1: 20.0,
                label: Some("wall".into()),
            },
            Obstacle::Rect {
                x0: 29.5,
                y0: 0.0,
                x1: 30.0,
                y1: 20.0,
                label: Some("wall".into()),
            },
        ];
        obstacles.extend(extra);
        GroundTruthMap::from_spec(&MapSpec {
            width_m: 30.0,
            height_m: 20.0,
            cell_size_m: 0.5,
            obstacles,
            objects,
            target_sites: vec![],
        })
        .unwrap()
    }

    fn car(x: f64, y: f64) -> MapObject {
        MapObject {
            label: "car".into(),
            x,
            y,
            radius_m: 0.5,
        }
    }

    fn run(truth: &GroundTruthMap, cfg: &Config, start: Pose) -> SearchResult {
        let searcher = Searcher::new(SearchSetup {
            truth,
            config: cfg,
            target_label: "car".into(),
            start,
            grid: None,
            taskmap: None,
            start_mode: Mode::Reasoning,
        })
        .unwrap();
        let mut p = ScriptedProposer::new(cfg.proposer.script.clone());
        searcher.run(&mut p)
    }

    #[test]
    fn adjacent_target_found_immediately() {
        let truth = walled(vec![car(8.25, 10.25)], vec![]);
        let cfg = Config::default();
        let r = run(&truth, &cfg, Pose::new(Vec2::new(5.25, 10.25), 0.0));
        assert_eq!(r.outcome, Outcome::Found);
        assert_eq!(r.path_length_m, 0.0);
        assert_eq!(r.steps, 0);
    }

    #[test]
    fn hidden_target_is_found_and_path_length_matches_trajectory() {
        // A wall hides the car from the start.
        let truth = walled(
            vec![car(25.25, 10.25)],
            vec![Obstacle::Rect {
                x0: 14.0,
                y0: 0.0,
                x1: 15.0,
                y1: 15.0,
                label: Some("wall".into()),
            }],
        );
        let cfg = Config::default();
        let r = run(&truth, &cfg, Pose::new(Vec2::new(3.25, 10.25), 0.0));
        assert_eq!(r.outcome, Outcome::Found, "{:?}", r.message);
        assert!(r.steps > 0);
        assert!((polyline_length(&r.trajectory) - r.path_length_m).abs() < 1e-6);
        for p in &r.trajectory {
            assert!(truth.is_free(*p));
        }
    }

    #[test]
    fn absent_target_exhausts() {
        let truth = walled(vec![], vec![]);
        let cfg = Config::default();
        let r = run(&truth, &cfg, Pose::new(Vec2::new(3.25, 10.25), 0.0));
        assert_eq!(r.outcome, Outcome::Exhausted);
        assert_eq!(r.message.as_deref(), Some("search exhausted, target absent"));
    }

    #[test]
    fn reasoning_moves_at_least_min_travel_in_open_space() {
        let truth = walled(vec![], vec![]);
        let cfg = Config::default();
        let mut s = Searcher::new(SearchSetup {
            truth: &truth,
            config: &cfg,
            target_label: "car".into(),
            start: Pose::new(Vec2::new(5.25, 10.25), 0.0),
            grid: None,
            taskmap: None,
            start_mode: Mode::Reasoning,
        })
        .unwrap();
        let mut p = ScriptedProposer::new(cfg.proposer.script.clone());
        s.step(&mut p);
        assert!(s.path_length_m() >= cfg.search.min_travel_m - 1e-9);
        assert_eq!(s.state().mode, Mode::Reasoning);
    }

    #[test]
    fn experienced_without_memory_falls_back_to_reasoning() {
        let truth = walled(vec![car(25.25, 10.25)], vec![]);
        let cfg = Config::default();
        let mut s = Searcher::new(SearchSetup {
            truth: &truth,
            config: &cfg,
            target_label: "car".into(),
            start: Pose::new(Vec2::new(3.25, 3.25), 0.0),
            grid: None,
            taskmap: None,
            start_mode: Mode::ExperiencedTour,
        })
        .unwrap();
        let mut p = ScriptedProposer::new(cfg.proposer.script.clone());
        s.step(&mut p);
        let switched = s.events().iter().any(|e| {
            matches!(
                &e.decision,
                Decision::ModeSwitch {
                    from: Mode::ExperiencedTour,
                    to: Mode::Reasoning,
                    ..
                }
            )
        });
        assert!(switched);
    }
}
