use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::dout::{
    format_order, parse_proposal, proposal_similarity, score_and_rank, CriteriaWeights, FeedbackRecord,
    HeuristicProposer, Proposer, ProposerRequest, SegmentMeasurement, SegmentSummary, ViolationKind,
};

/// A fixed observation replayed every iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSetup {
    pub request: ProposerRequest,
    pub measurements: Vec<SegmentMeasurement>,
    pub theta_prev: f64,
    pub weights: CriteriaWeights,
}

/// Eleven-segment view where the label cues and the evaluator disagree:
/// parking signs sit in the shallow, already explored segments behind the
/// robot while the open ground lies ahead.
pub fn convergence_fixture(weights: CriteriaWeights) -> ConvergenceSetup {
    let n = 11;
    let mid = n / 2;
    let width = TAU / n as f64;
    let mut segments = Vec::with_capacity(n);
    let mut measurements = Vec::with_capacity(n);
    for i in 0..n {
        let off = i.abs_diff(mid);
        let angle = (i as f64 - mid as f64) * width;
        let signs = off.saturating_sub(3) as u32;
        let mut labels = BTreeMap::new();
        if signs > 0 {
            labels.insert("parking_sign".to_string(), signs);
        }
        labels.insert("tree".to_string(), 1);
        let depth = 10.0 - 1.9 * off as f64;
        segments.push(SegmentSummary {
            index: i,
            center_angle: angle,
            labels,
            free_depth_m: depth,
        });
        measurements.push(SegmentMeasurement {
            free_depth_m: depth,
            overlap: 0.5 * off as f64 / mid as f64,
            heading: angle,
        });
    }
    ConvergenceSetup {
        request: ProposerRequest {
            task_description: "Find the car. Choose the order in which to explore the panorama directions.".into(),
            target_label: "car".into(),
            segments,
            feedback_history: Vec::new(),
            cycle: 0,
        },
        measurements,
        theta_prev: 0.0,
        weights,
    }
}

/// The offline learning stand-in: label-driven ranking that imitates the
/// evaluator at rate `blend`. Its first two replies break the mandatory
/// criteria (prose, then a short list) the way an untuned model often does.
pub fn stub_proposer(associations: BTreeMap<String, f64>, blend: f64) -> HeuristicProposer {
    HeuristicProposer::new(associations, blend).with_warmup([
        "The parking signs behind us suggest a car park, so I would turn around first.",
        "{D0; D10; D1}",
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub iteration: usize,
    pub compliant: bool,
    /// `format_violation` or `count_mismatch` for rejected replies.
    pub violation: Option<String>,
    pub proposal: Option<String>,
    pub evaluator: Option<String>,
    pub similarity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub first_compliant_iteration: Option<usize>,
    pub initial_similarity: Option<f64>,
    pub final_similarity: Option<f64>,
    /// Largest drop between consecutive compliant similarities.
    pub max_drop: f64,
    #[serde(skip)]
    pub points: Vec<ConvergencePoint>,
}

impl ConvergenceReport {
    /// Compliant similarities in iteration order.
    pub fn curve(&self) -> Vec<f64> {
        self.points.iter().filter_map(|p| p.similarity).collect()
    }

    /// Writes `similarity.csv` and `convergence.json`.
    pub fn write_to_dir(&self, out: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(out).map_err(|e| SimError::Io(out.to_path_buf(), e))?;
        let path = out.join("similarity.csv");
        let err = |e: csv::Error| SimError::Output(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(&path).map_err(err)?;
        for p in &self.points {
            w.serialize(p).map_err(err)?;
        }
        w.flush().map_err(|e| SimError::Io(path.clone(), e))?;
        let path = out.join("convergence.json");
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(&path, json + "\n").map_err(|e| SimError::Io(path, e))
    }
}

/// Records kept in the request between iterations.
const HISTORY_KEEP: usize = 8;

/// Feeds the same observation to `proposer` for `iterations` calls. Each call
/// is parsed; a violation is fed back as corrective feedback, a compliant
/// list is scored, compared with the evaluator's ranking, and the ranking fed
/// back as advisory feedback.
pub fn run_convergence(
    proposer: &mut dyn Proposer,
    setup: &ConvergenceSetup,
    iterations: usize,
) -> Result<ConvergenceReport, SimError> {
    if iterations == 0 {
        return Err(SimError::Output("iterations must be at least 1".into()));
    }
    let n = setup.request.n();
    let mut request = setup.request.clone();
    request.validate()?;
    let mut points = Vec::with_capacity(iterations);
    for iteration in 1..=iterations {
        request.cycle = iteration;
        let raw = proposer.propose(&request)?;
        let (point, record) = match parse_proposal(&raw, n) {
            Ok(proposal) => {
                let ranked = score_and_rank(&proposal, &setup.measurements, setup.theta_prev, &setup.weights)?;
                let similarity = proposal_similarity(&proposal, &ranked)?;
                (
                    ConvergencePoint {
                        iteration,
                        compliant: true,
                        violation: None,
                        proposal: Some(format_order(&proposal.order)),
                        evaluator: Some(format_order(&ranked.order)),
                        similarity: Some(similarity),
                    },
                    FeedbackRecord::advisory(ranked),
                )
            }
            Err(v) => (
                ConvergencePoint {
                    iteration,
                    compliant: false,
                    violation: Some(
                        match v.kind {
                            ViolationKind::FormatViolation => "format_violation",
                            ViolationKind::CountMismatch => "count_mismatch",
                        }
                        .into(),
                    ),
                    proposal: None,
                    evaluator: None,
                    similarity: None,
                },
                FeedbackRecord::violation(&v),
            ),
        };
        points.push(point);
        request.feedback_history.push(record);
        let excess = request.feedback_history.len().saturating_sub(HISTORY_KEEP);
        request.feedback_history.drain(..excess);
    }
    let curve: Vec<f64> = points.iter().filter_map(|p| p.similarity).collect();
    let max_drop = curve.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    Ok(ConvergenceReport {
        iterations,
        first_compliant_iteration: points.iter().find(|p| p.compliant).map(|p| p.iteration),
        initial_similarity: curve.first().copied(),
        final_similarity: curve.last().copied(),
        max_drop,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ProposerConfig;

    fn run(blend: f64, iterations: usize) -> ConvergenceReport {
        let setup = convergence_fixture(CriteriaWeights::default());
        let mut p = stub_proposer(ProposerConfig::default().associations, blend);
        run_convergence(&mut p, &setup, iterations).unwrap()
    }

    #[test]
    fn warmup_violations_then_compliance() {
        let r = run(0.5, 30);
        assert_eq!(r.points.len(), 30);
        assert_eq!(r.points[0].violation.as_deref(), Some("format_violation"));
        assert_eq!(r.points[1].violation.as_deref(), Some("count_mismatch"));
        assert_eq!(r.first_compliant_iteration, Some(3));
    }

    #[test]
    fn full_imitation_reaches_one_next_iteration() {
        let r = run(1.0, 10);
        let curve = r.curve();
        assert!(curve[0] < 1.0);
        assert!(curve[1..].iter().all(|&s| (s - 1.0).abs() < 1e-12), "{curve:?}");
    }

    #[test]
    fn no_learning_is_flat() {
        let curve = run(0.0, 20).curve();
        assert!(curve.iter().all(|&s| s == curve[0]));
    }

    #[test]
    fn half_blend_is_non_decreasing() {
        let r = run(0.5, 30);
        let curve = r.curve();
        for w in curve.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{curve:?}");
        }
        assert!(r.final_similarity.unwrap() >= r.initial_similarity.unwrap());
    }

    #[test]
    fn zero_iterations_rejected() {
        let setup = convergence_fixture(CriteriaWeights::default());
        let mut p = stub_proposer(BTreeMap::new(), 0.5);
        assert!(run_convergence(&mut p, &setup, 0).is_err());
    }
}
