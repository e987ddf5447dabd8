//! Proposer/evaluator reasoning loop over panorama segments.
//!
//! A [`Proposer`] emits free text that should name every segment once, best
//! first. The evaluator enforces the mandatory criteria (parseable list, right
//! length) with corrective feedback and retries, then scores each surviving
//! segment with
//!
//! ```text
//! C_i = λ1·Order(i) + λ2·C_s,i + λ3·C_r,i + λ4·C_d,i
//! ```
//!
//! where `Order(i)` is the segment's 0-based position in the proposer's list,
//! `C_s` penalizes nearby obstacles, `C_r` penalizes re-exploring covered ground
//! and `C_d` penalizes turning. The ascending ranking and its scores are fed
//! back to the proposer.

mod parse;
mod proposer;
mod remote;

pub use parse::{parse_proposal, MandatoryViolation, ViolationKind};
pub use proposer::{HeuristicProposer, Proposer, ScriptedProposer};
pub use remote::{
    chat_request_body, parse_chat_response, render_prompt, FixtureRecord, RemoteConfig, RemoteProposer, ReplayProposer,
};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProposerError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("proposer configuration: {0}")]
    Config(String),
    #[error("script exhausted: {0}")]
    Script(String),
}

#[derive(Debug, Error)]
pub enum DoutError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("proposer failed mandatory criteria after {calls} calls")]
    MandatoryExhausted {
        calls: usize,
        transcript: Vec<FeedbackRecord>,
    },
    #[error(transparent)]
    Proposer(#[from] ProposerError),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// What the proposer sees about one panorama segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub index: usize,
    /// World-frame center bearing of the segment (radians).
    pub center_angle: f64,
    pub labels: BTreeMap<String, u32>,
    pub free_depth_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposerRequest {
    pub task_description: String,
    pub target_label: String,
    pub segments: Vec<SegmentSummary>,
    pub feedback_history: Vec<FeedbackRecord>,
    /// Index of the reasoning cycle this request belongs to. Retries within a
    /// cycle share it.
    #[serde(default)]
    pub cycle: usize,
}

impl ProposerRequest {
    pub fn n(&self) -> usize {
        self.segments.len()
    }

    pub fn validate(&self) -> Result<(), DoutError> {
        let n = self.n();
        if n < 3 || n.is_multiple_of(2) {
            return Err(DoutError::InvalidRequest(format!(
                "segment count must be odd and at least 3 (N = 2k + 1), got {n}"
            )));
        }
        if self.segments.iter().enumerate().any(|(i, s)| s.index != i) {
            return Err(DoutError::InvalidRequest(
                "segments must be indexed 0..N-1 in order".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawProposal {
    pub text: String,
}

impl RawProposal {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }
}

/// A proposer's ordering of segment indices, best first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropositionList {
    pub order: Vec<usize>,
}

impl fmt::Display for PropositionList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_list(f, &self.order)
    }
}

fn write_list(f: &mut impl fmt::Write, order: &[usize]) -> fmt::Result {
    f.write_char('{')?;
    for (k, i) in order.iter().enumerate() {
        if k > 0 {
            f.write_str("; ")?;
        }
        write!(f, "D{i}")?;
    }
    f.write_char('}')
}

/// Format a list of segment indices in the proposition grammar.
pub fn format_order(order: &[usize]) -> String {
    let mut s = String::new();
    write_list(&mut s, order).expect("writing to a String");
    s
}

/// Evaluator output. All three vectors are aligned and sorted by ascending score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedPropositions {
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
    /// The advisory part of each score, `λ2·C_s + λ3·C_r + λ4·C_d`.
    pub advisory: Vec<f64>,
}

impl RankedPropositions {
    /// Advisory penalty per segment index.
    pub fn advisory_by_segment(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.order.len()];
        for (seg, a) in self.order.iter().zip(&self.advisory) {
            out[*seg] = *a;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriteriaWeights {
    pub order: f64,
    pub security: f64,
    pub repeat: f64,
    pub direction: f64,
    pub safe_distance_m: f64,
    pub max_mandatory_retries: usize,
}

impl Default for CriteriaWeights {
    fn default() -> Self {
        Self {
            order: 2.5,
            security: 10.0,
            repeat: 3.0,
            direction: 1.5,
            safe_distance_m: 1.0,
            max_mandatory_retries: 5,
        }
    }
}

impl CriteriaWeights {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("order", self.order),
            ("security", self.security),
            ("repeat", self.repeat),
            ("direction", self.direction),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("criteria weight {name} must be >= 0, got {v}"));
            }
        }
        if !(self.safe_distance_m > 0.0) {
            return Err(format!("safe distance must be > 0, got {}", self.safe_distance_m));
        }
        if self.max_mandatory_retries == 0 {
            return Err("max_mandatory_retries must be at least 1".into());
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            order: self.order * c,
            security: self.security * c,
            repeat: self.repeat * c,
            direction: self.direction * c,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    FormatViolation,
    CountMismatch,
    AdvisoryRanking,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub kind: FeedbackKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranked: Option<RankedPropositions>,
}

impl FeedbackRecord {
    pub fn violation(v: &MandatoryViolation) -> Self {
        let kind = match v.kind {
            ViolationKind::FormatViolation => FeedbackKind::FormatViolation,
            ViolationKind::CountMismatch => FeedbackKind::CountMismatch,
        };
        Self {
            kind,
            message: v.message.clone(),
            ranked: None,
        }
    }

    pub fn advisory(ranked: RankedPropositions) -> Self {
        let scores: Vec<String> = ranked.scores.iter().map(|s| format!("{s:.2}")).collect();
        Self {
            kind: FeedbackKind::AdvisoryRanking,
            message: format!(
                "Evaluator ranking {} with scores [{}] (lower is better).",
                format_order(&ranked.order),
                scores.join(", ")
            ),
            ranked: Some(ranked),
        }
    }
}

/// Per-segment environment measurements used by the advisory criteria.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMeasurement {
    /// Nearest-obstacle distance inside the segment (meters).
    pub free_depth_m: f64,
    /// Overlap of the segment's visible free space with explored ground, in [0, 1].
    pub overlap: f64,
    /// Direction of the segment center (radians).
    pub heading: f64,
}

/// `max(0, d_safe − d)²`.
pub fn security_penalty(d: f64, d_safe: f64) -> f64 {
    let gap = (d_safe - d).max(0.0);
    gap * gap
}

/// The overlap ratio, passed through.
pub fn repeat_penalty(overlap: f64) -> f64 {
    overlap
}

/// `1 − cos(θ − θ_prev)`.
pub fn direction_penalty(theta: f64, theta_prev: f64) -> f64 {
    1.0 - (theta - theta_prev).cos()
}

/// Scores every proposition and sorts ascending; ties keep proposer order.
pub fn score_and_rank(
    proposal: &PropositionList,
    measurements: &[SegmentMeasurement],
    theta_prev: f64,
    w: &CriteriaWeights,
) -> Result<RankedPropositions, DoutError> {
    if proposal.order.len() != measurements.len() {
        return Err(DoutError::LengthMismatch(proposal.order.len(), measurements.len()));
    }
    let mut scored: Vec<(usize, f64, f64)> = proposal
        .order
        .iter()
        .enumerate()
        .map(|(rank, &seg)| {
            let m = &measurements[seg];
            let advisory = w.security * security_penalty(m.free_depth_m, w.safe_distance_m)
                + w.repeat * repeat_penalty(m.overlap)
                + w.direction * direction_penalty(m.heading, theta_prev);
            (seg, w.order * rank as f64 + advisory, advisory)
        })
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(RankedPropositions {
        order: scored.iter().map(|s| s.0).collect(),
        scores: scored.iter().map(|s| s.1).collect(),
        advisory: scored.iter().map(|s| s.2).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleOutcome {
    pub proposal: PropositionList,
    pub ranked: RankedPropositions,
    pub proposer_calls: usize,
    /// Records produced during this cycle, in order.
    pub feedback: Vec<FeedbackRecord>,
}

/// One reasoning cycle: propose, enforce the mandatory criteria with
/// corrective feedback (at most `max_mandatory_retries` calls), then rank.
///
/// Every record produced here is also appended to `request.feedback_history`.
pub fn reason_cycle(
    proposer: &mut dyn Proposer,
    request: &mut ProposerRequest,
    measurements: &[SegmentMeasurement],
    theta_prev: f64,
    w: &CriteriaWeights,
) -> Result<CycleOutcome, DoutError> {
    request.validate()?;
    let n = request.n();
    if measurements.len() != n {
        return Err(DoutError::LengthMismatch(n, measurements.len()));
    }
    let mut feedback = Vec::new();
    let mut calls = 0;
    while calls < w.max_mandatory_retries {
        calls += 1;
        let raw = proposer.propose(request)?;
        match parse_proposal(&raw, n) {
            Ok(proposal) => {
                let ranked = score_and_rank(&proposal, measurements, theta_prev, w)?;
                let record = FeedbackRecord::advisory(ranked.clone());
                request.feedback_history.push(record.clone());
                feedback.push(record);
                return Ok(CycleOutcome {
                    proposal,
                    ranked,
                    proposer_calls: calls,
                    feedback,
                });
            }
            Err(violation) => {
                let record = FeedbackRecord::violation(&violation);
                request.feedback_history.push(record.clone());
                feedback.push(record);
            }
        }
    }
    Err(DoutError::MandatoryExhausted {
        calls,
        transcript: feedback,
    })
}

/// How a proposition list is turned into a vector for cosine similarity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityEncoding {
    /// The list of segment indices as written.
    #[default]
    IndexSequence,
    /// Entry `i` is the position of segment `i` in the list.
    RankVector,
}

fn encode(order: &[usize], encoding: SimilarityEncoding) -> Vec<f64> {
    match encoding {
        SimilarityEncoding::IndexSequence => order.iter().map(|&i| i as f64).collect(),
        SimilarityEncoding::RankVector => {
            let mut v = vec![0.0; order.len()];
            for (rank, &seg) in order.iter().enumerate() {
                if seg < v.len() {
                    v[seg] = rank as f64;
                }
            }
            v
        }
    }
}

/// Cosine similarity of two orderings under `encoding`.
pub fn proposal_similarity_with(d: &[usize], d_star: &[usize], encoding: SimilarityEncoding) -> Result<f64, DoutError> {
    if d.len() != d_star.len() {
        return Err(DoutError::LengthMismatch(d.len(), d_star.len()));
    }
    let a = encode(d, encoding);
    let b = encode(d_star, encoding);
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity between a proposal and the evaluator's ranking, using
/// the index-sequence encoding.
pub fn proposal_similarity(d: &PropositionList, d_star: &RankedPropositions) -> Result<f64, DoutError> {
    proposal_similarity_with(&d.order, &d_star.order, SimilarityEncoding::IndexSequence)
}
