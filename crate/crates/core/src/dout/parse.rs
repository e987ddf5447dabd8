//! Parser for the proposition grammar
//!
//! ```text
//! list := '{'? item (';' item)* '}'?
//! item := ws* 'D' uint ws*
//! ```
//!
//! Leading and trailing whitespace around the whole reply is ignored.

use serde::{Deserialize, Serialize};

use super::{PropositionList, RawProposal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    FormatViolation,
    CountMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MandatoryViolation {
    pub kind: ViolationKind,
    pub message: String,
}

fn format_violation(n: usize, detail: &str) -> MandatoryViolation {
    MandatoryViolation {
        kind: ViolationKind::FormatViolation,
        message: format!(
            "Mandatory criterion 1 (format) violated: {detail}. Reply only with the structured \
             list {{D<i>; D<j>; ...}} naming each of the {n} segments D0..D{} exactly once, best first.",
            n.saturating_sub(1)
        ),
    }
}

fn parse_item(item: &str) -> Option<usize> {
    let digits = item.trim_matches(|c: char| c.is_whitespace()).strip_prefix('D')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Parses a proposer reply into a permutation of `0..n`.
pub fn parse_proposal(raw: &RawProposal, n: usize) -> Result<PropositionList, MandatoryViolation> {
    let mut body = raw.text.trim();
    if let Some(rest) = body.strip_prefix('{') {
        body = rest;
    }
    if let Some(rest) = body.strip_suffix('}') {
        body = rest;
    }
    let mut order = Vec::new();
    for item in body.split(';') {
        match parse_item(item) {
            Some(i) => order.push(i),
            None => return Err(format_violation(n, &format!("unparseable item {:?}", item.trim()))),
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for &i in &order {
        if !seen.insert(i) {
            return Err(format_violation(n, &format!("segment D{i} listed more than once")));
        }
    }
    if order.len() != n {
        return Err(MandatoryViolation {
            kind: ViolationKind::CountMismatch,
            message: format!(
                "Mandatory criterion 2 (count) violated: the list has {} propositions but there \
                 are {n} segments; include every segment D0..D{} exactly once.",
                order.len(),
                n - 1
            ),
        });
    }
    if let Some(&bad) = order.iter().find(|&&i| i >= n) {
        return Err(format_violation(n, &format!("segment D{bad} does not exist")));
    }
    Ok(PropositionList { order })
}
