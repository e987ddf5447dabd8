//! OpenAI-compatible chat-completions proposer with JSON-lines record/replay.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{FeedbackKind, Proposer, ProposerError, ProposerRequest, RawProposal};

const SYSTEM_PROMPT: &str = "You guide a ground robot searching for an object. The surrounding \
panorama is split into N numbered segments D0..D(N-1); the middle segment is straight ahead. \
Rank every segment from most to least promising for finding the target. Reply with exactly one \
line in the form {D4; D5; D3; ...} listing each segment once and nothing else. An evaluator \
checks the format and re-ranks your list for safety (obstacle distance), redundant exploration \
and heading changes; use its feedback to improve your next answer.";

/// System and user messages for a request. The user message lists each
/// segment's visible labels and free depth, then the feedback transcript.
pub fn render_prompt(request: &ProposerRequest) -> (String, String) {
    let mut user = format!(
        "Task: {}\nTarget: {}\nSegments ({}):\n",
        request.task_description,
        request.target_label,
        request.n()
    );
    for s in &request.segments {
        let labels = if s.labels.is_empty() {
            "nothing recognized".to_string()
        } else {
            s.labels
                .iter()
                .map(|(l, c)| format!("{l} x{c}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        user.push_str(&format!(
            "- D{}: free space {:.1} m; sees {}\n",
            s.index, s.free_depth_m, labels
        ));
    }
    if !request.feedback_history.is_empty() {
        user.push_str("Evaluator feedback so far:\n");
        for r in &request.feedback_history {
            let tag = match r.kind {
                FeedbackKind::FormatViolation => "format",
                FeedbackKind::CountMismatch => "count",
                FeedbackKind::AdvisoryRanking => "ranking",
            };
            user.push_str(&format!("- [{tag}] {}\n", r.message));
        }
    }
    user.push_str("Answer with the ranked list only.");
    (SYSTEM_PROMPT.to_string(), user)
}

pub fn chat_request_body(request: &ProposerRequest, model: &str) -> Value {
    let (system, user) = render_prompt(request);
    json!({
        "model": model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
    })
}

/// Extracts `choices[0].message.content` from a response body.
pub fn parse_chat_response(body: &str) -> Result<RawProposal, ProposerError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| ProposerError::MalformedResponse(format!("invalid JSON body: {e}")))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(|text| RawProposal { text: text.to_string() })
        .ok_or_else(|| ProposerError::MalformedResponse("missing choices[0].message.content".into()))
}

/// One recorded exchange. `response` holds the raw body so malformed replies
/// replay faithfully; `error` holds a transport failure instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub request: Value,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub timestamp: u64,
}

impl FixtureRecord {
    fn outcome(&self) -> Result<RawProposal, ProposerError> {
        if let Some(err) = &self.error {
            return Err(ProposerError::Transport(err.clone()));
        }
        if let Some(status) = self.status {
            if !(200..300).contains(&status) {
                return Err(ProposerError::Transport(format!("HTTP {status}")));
            }
        }
        match &self.response {
            Some(body) => parse_chat_response(body),
            None => Err(ProposerError::Transport("recorded exchange has no response".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RemoteConfig {
    /// Full chat-completions URL, e.g. `https://api.openai.com/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    pub api_key: String,
    pub timeout: Duration,
}

impl RemoteConfig {
    /// Reads the API key from `key_var`.
    pub fn from_env(endpoint: &str, model: &str, key_var: &str, timeout: Duration) -> Result<Self, ProposerError> {
        let api_key = std::env::var(key_var).map_err(|_| {
            ProposerError::Config(format!(
                "remote backend needs an API key: set the {key_var} environment variable"
            ))
        })?;
        Ok(Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key,
            timeout,
        })
    }
}

/// Single-attempt HTTP proposer; a failed call is surfaced, never retried here.
pub struct RemoteProposer {
    config: RemoteConfig,
    agent: ureq::Agent,
    record_to: Option<PathBuf>,
}

impl RemoteProposer {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            agent,
            record_to: None,
        }
    }

    /// Appends every exchange to a JSON-lines fixture file.
    pub fn recording_to(mut self, path: impl Into<PathBuf>) -> Self {
        self.record_to = Some(path.into());
        self
    }

    fn exchange(&self, body: &Value) -> FixtureRecord {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut record = FixtureRecord {
            request: body.clone(),
            response: None,
            status: None,
            error: None,
            timestamp,
        };
        let sent = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", format!("Bearer {}", self.config.api_key))
            .header("Content-Type", "application/json")
            .send(body.to_string());
        match sent {
            Ok(mut resp) => {
                record.status = Some(resp.status().as_u16());
                match resp.body_mut().read_to_string() {
                    Ok(text) => record.response = Some(text),
                    Err(e) => record.error = Some(e.to_string()),
                }
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        record
    }

    fn record(&self, record: &FixtureRecord) -> Result<(), ProposerError> {
        let Some(path) = &self.record_to else {
            return Ok(());
        };
        let line =
            serde_json::to_string(record).map_err(|e| ProposerError::Config(format!("cannot encode fixture: {e}")))?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ProposerError::Config(format!("cannot open {}: {e}", path.display())))?;
        writeln!(file, "{line}").map_err(|e| ProposerError::Config(format!("cannot write {}: {e}", path.display())))
    }
}

impl Proposer for RemoteProposer {
    fn propose(&mut self, request: &ProposerRequest) -> Result<RawProposal, ProposerError> {
        let body = chat_request_body(request, &self.config.model);
        let record = self.exchange(&body);
        self.record(&record)?;
        record.outcome()
    }

    fn name(&self) -> &str {
        "remote"
    }
}

/// Plays back a fixture file in order, without touching the network.
#[derive(Clone, Debug)]
pub struct ReplayProposer {
    records: Vec<FixtureRecord>,
    cursor: usize,
}

impl ReplayProposer {
    pub fn new(records: Vec<FixtureRecord>) -> Self {
        Self { records, cursor: 0 }
    }

    pub fn load(path: &Path) -> Result<Self, ProposerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProposerError::Config(format!("cannot read {}: {e}", path.display())))?;
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l)
                    .map_err(|e| ProposerError::Config(format!("{}:{}: bad fixture line: {e}", path.display(), i + 1)))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self::new(records))
    }

    pub fn remaining(&self) -> usize {
        self.records.len() - self.cursor
    }
}

impl Proposer for ReplayProposer {
    fn propose(&mut self, _request: &ProposerRequest) -> Result<RawProposal, ProposerError> {
        let record = self
            .records
            .get(self.cursor)
            .ok_or_else(|| ProposerError::Script(format!("fixture exhausted after {} exchanges", self.cursor)))?;
        self.cursor += 1;
        record.outcome()
    }

    fn name(&self) -> &str {
        "replay"
    }
}
