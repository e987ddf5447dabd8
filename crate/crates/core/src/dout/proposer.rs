use std::collections::{BTreeMap, VecDeque};

use super::{format_order, FeedbackKind, ProposerError, ProposerRequest, RawProposal};

/// Anything that turns a request into proposition text: an LLM endpoint, a
/// recorded fixture, a script, or an offline heuristic.
pub trait Proposer {
    fn propose(&mut self, request: &ProposerRequest) -> Result<RawProposal, ProposerError>;

    /// Short name used in traces.
    fn name(&self) -> &str;
}

/// Replays a fixed list of replies, cycling when it runs out.
#[derive(Clone, Debug)]
pub struct ScriptedProposer {
    replies: Vec<String>,
    cursor: usize,
}

impl ScriptedProposer {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self {
            replies: replies.into_iter().map(Into::into).collect(),
            cursor: 0,
        }
    }

    pub fn calls(&self) -> usize {
        self.cursor
    }
}

impl Proposer for ScriptedProposer {
    fn propose(&mut self, _request: &ProposerRequest) -> Result<RawProposal, ProposerError> {
        if self.replies.is_empty() {
            return Err(ProposerError::Script("no scripted replies".into()));
        }
        let text = self.replies[self.cursor % self.replies.len()].clone();
        self.cursor += 1;
        Ok(RawProposal { text })
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Deterministic offline stand-in for an LLM.
///
/// Segments are ranked by semantic relevance (target label counts, then
/// weighted associated labels), then by free depth, then by closeness to the
/// middle (straight-ahead) segment. The ranking is turned into a key vector
/// `rank × base_scale`.
///
/// With `blend > 0` the proposer imitates the evaluator: after every advisory
/// ranking it moves its key vector toward the advisory penalties,
/// `key ← (1 − blend)·key + blend·advisory`, and keeps using the learned key.
/// `warmup` replies are emitted verbatim before anything else.
#[derive(Clone, Debug)]
pub struct HeuristicProposer {
    pub associations: BTreeMap<String, f64>,
    pub base_scale: f64,
    pub blend: f64,
    warmup: VecDeque<String>,
    learned: Option<Vec<f64>>,
    learned_at_cycle: Option<usize>,
}

impl HeuristicProposer {
    pub fn new(associations: BTreeMap<String, f64>, blend: f64) -> Self {
        Self {
            associations,
            base_scale: 2.5,
            blend: blend.clamp(0.0, 1.0),
            warmup: VecDeque::new(),
            learned: None,
            learned_at_cycle: None,
        }
    }

    pub fn with_warmup<S: Into<String>>(mut self, replies: impl IntoIterator<Item = S>) -> Self {
        self.warmup = replies.into_iter().map(Into::into).collect();
        self
    }

    fn relevance(&self, request: &ProposerRequest, labels: &BTreeMap<String, u32>) -> f64 {
        labels
            .iter()
            .map(|(label, &count)| {
                let w = if *label == request.target_label {
                    100.0
                } else {
                    self.associations.get(label).copied().unwrap_or(0.0)
                };
                w * count as f64
            })
            .fold(0.0, |acc, x| acc + x)
    }

    /// Base key per segment index (lower is better).
    pub fn base_key(&self, request: &ProposerRequest) -> Vec<f64> {
        let n = request.n();
        let mid = (n / 2) as i64;
        let mut idx: Vec<usize> = (0..n).collect();
        let rel: Vec<f64> = request
            .segments
            .iter()
            .map(|s| self.relevance(request, &s.labels))
            .collect();
        idx.sort_by(|&a, &b| {
            rel[b]
                .total_cmp(&rel[a])
                .then(
                    request.segments[b]
                        .free_depth_m
                        .total_cmp(&request.segments[a].free_depth_m),
                )
                .then(((a as i64 - mid).abs()).cmp(&(b as i64 - mid).abs()))
                .then(a.cmp(&b))
        });
        let mut key = vec![0.0; n];
        for (rank, &seg) in idx.iter().enumerate() {
            key[seg] = rank as f64 * self.base_scale;
        }
        key
    }

    fn learn(&mut self, request: &ProposerRequest, base: &[f64]) {
        if self.blend <= 0.0 {
            return;
        }
        // Learn at most once per cycle, from the previous cycle's ranking.
        if self.learned_at_cycle == Some(request.cycle) {
            return;
        }
        self.learned_at_cycle = Some(request.cycle);
        let latest = request
            .feedback_history
            .iter()
            .rev()
            .find(|r| r.kind == FeedbackKind::AdvisoryRanking)
            .and_then(|r| r.ranked.as_ref());
        let Some(ranked) = latest else {
            return;
        };
        if ranked.order.len() != base.len() {
            return;
        }
        let target = ranked.advisory_by_segment();
        let current = self.learned.take().unwrap_or_else(|| base.to_vec());
        self.learned = Some(
            current
                .iter()
                .zip(&target)
                .map(|(k, t)| (1.0 - self.blend) * k + self.blend * t)
                .collect(),
        );
    }
}

impl Proposer for HeuristicProposer {
    fn propose(&mut self, request: &ProposerRequest) -> Result<RawProposal, ProposerError> {
        if let Some(text) = self.warmup.pop_front() {
            return Ok(RawProposal { text });
        }
        let base = self.base_key(request);
        self.learn(request, &base);
        let key = self.learned.as_deref().unwrap_or(&base);
        let mut order: Vec<usize> = (0..request.n()).collect();
        order.sort_by(|&a, &b| key[a].total_cmp(&key[b]).then(base[a].total_cmp(&base[b])));
        Ok(RawProposal {
            text: format_order(&order),
        })
    }

    fn name(&self) -> &str {
        "heuristic"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dout::{parse_proposal, SegmentSummary};

    fn request(labels: &[(usize, &str, u32)], depths: &[f64]) -> ProposerRequest {
        ProposerRequest {
            task_description: "find the car".into(),
            target_label: "car".into(),
            segments: depths
                .iter()
                .enumerate()
                .map(|(i, &d)| SegmentSummary {
                    index: i,
                    center_angle: 0.0,
                    labels: labels
                        .iter()
                        .filter(|l| l.0 == i)
                        .map(|l| (l.1.to_string(), l.2))
                        .collect(),
                    free_depth_m: d,
                })
                .collect(),
            feedback_history: vec![],
            cycle: 0,
        }
    }

    #[test]
    fn scripted_cycles() {
        let mut p = ScriptedProposer::new(["a", "b"]);
        let req = request(&[], &[1.0, 1.0, 1.0]);
        let got: Vec<String> = (0..3).map(|_| p.propose(&req).unwrap().text).collect();
        assert_eq!(got, vec!["a", "b", "a"]);
        assert!(ScriptedProposer::new(Vec::<String>::new()).propose(&req).is_err());
    }

    #[test]
    fn heuristic_prefers_target_then_association_then_depth() {
        let mut assoc = BTreeMap::new();
        assoc.insert("parking_sign".to_string(), 5.0);
        let mut p = HeuristicProposer::new(assoc, 0.0);
        let req = request(
            &[(3, "car", 1), (0, "parking_sign", 2), (4, "tree", 9)],
            &[2.0, 9.0, 4.0, 1.0, 3.0],
        );
        let raw = p.propose(&req).unwrap();
        let order = parse_proposal(&raw, 5).unwrap().order;
        assert_eq!(order, vec![3, 0, 1, 2, 4]);
    }

    #[test]
    fn warmup_replies_come_first() {
        let mut p = HeuristicProposer::new(BTreeMap::new(), 0.0).with_warmup(["prose", "D0; D1"]);
        let req = request(&[], &[1.0, 2.0, 3.0]);
        assert_eq!(p.propose(&req).unwrap().text, "prose");
        assert_eq!(p.propose(&req).unwrap().text, "D0; D1");
        assert!(parse_proposal(&p.propose(&req).unwrap(), 3).is_ok());
    }
}
