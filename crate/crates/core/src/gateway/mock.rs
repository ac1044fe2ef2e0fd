//! Scripted, deterministic provider.
//!
//! A script is JSON Lines of
//! `{stage_label, match, response, injected_latency_ms}`. For each request
//! the first entry whose stage equals the request stage and whose `match`
//! hits the last user message wins. `match` is a substring (`""` matches
//! everything) or `{"regex": "..."}`.
//!
//! `response` is literal text, any other JSON value (sent back serialized),
//! or one of the generators below, which compute the reply from the prompt:
//!
//! * `{"$reduce_contains": "jazz"}`: reduction verdicts, `matches` iff the
//!   event line contains the needle (case-insensitive).
//! * `{"$echo_line": "Price:"}`: the first prompt line starting with the
//!   prefix, or a "not stated" sentence when there is none.
//! * `{"$fail": "message"}`: a retriable provider error.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use super::{PromptRequest, Provider, ProviderError, ProviderReply, Stage};
use crate::clock::Clock;

/// Line prefix the reduction prompt uses for each listed event.
pub(crate) const EVENT_LINE_PREFIX: &str = "[id=";

#[derive(Debug, Clone)]
pub enum MockMatch {
    Substring(String),
    Regex(Regex),
}

impl MockMatch {
    fn hits(&self, text: &str) -> bool {
        match self {
            MockMatch::Substring(s) => text.to_lowercase().contains(&s.to_lowercase()),
            MockMatch::Regex(re) => re.is_match(text),
        }
    }
}

impl<'de> Deserialize<'de> for MockMatch {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Substring(String),
            Regex { regex: String },
        }
        match Raw::deserialize(d)? {
            Raw::Substring(s) => Ok(MockMatch::Substring(s)),
            Raw::Regex { regex } => Regex::new(&regex).map(MockMatch::Regex).map_err(serde::de::Error::custom),
        }
    }
}

impl Serialize for MockMatch {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MockMatch::Substring(x) => s.serialize_str(x),
            MockMatch::Regex(re) => json!({ "regex": re.as_str() }).serialize(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MockResponse {
    Text(String),
    Json(Value),
    ReduceContains(String),
    EchoLine(String),
    Fail(String),
}

impl<'de> Deserialize<'de> for MockResponse {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        if let Value::String(s) = v {
            return Ok(MockResponse::Text(s));
        }
        if let Value::Object(obj) = &v {
            if obj.len() == 1 {
                let (k, arg) = obj.iter().next().expect("one entry");
                let arg_str = || {
                    arg.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| serde::de::Error::custom(format!("`{k}` takes a string")))
                };
                match k.as_str() {
                    "$reduce_contains" => return Ok(MockResponse::ReduceContains(arg_str()?)),
                    "$echo_line" => return Ok(MockResponse::EchoLine(arg_str()?)),
                    "$fail" => return Ok(MockResponse::Fail(arg_str()?)),
                    other if other.starts_with('$') => {
                        return Err(serde::de::Error::custom(format!("unknown generator `{other}`")))
                    }
                    _ => {}
                }
            }
        }
        Ok(MockResponse::Json(v))
    }
}

impl Serialize for MockResponse {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            MockResponse::Text(t) => s.serialize_str(t),
            MockResponse::Json(v) => v.serialize(s),
            MockResponse::ReduceContains(n) => json!({ "$reduce_contains": n }).serialize(s),
            MockResponse::EchoLine(p) => json!({ "$echo_line": p }).serialize(s),
            MockResponse::Fail(m) => json!({ "$fail": m }).serialize(s),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockEntry {
    pub stage_label: Stage,
    #[serde(rename = "match")]
    pub pattern: MockMatch,
    pub response: MockResponse,
    #[serde(default)]
    pub injected_latency_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum MockScriptError {
    #[error("mock script line {line}: {source}")]
    Line { line: usize, source: serde_json::Error },
    #[error("reading mock script: {0}")]
    Io(#[from] std::io::Error),
}

pub struct MockProvider {
    entries: Vec<MockEntry>,
    clock: Arc<dyn Clock>,
    calls: AtomicUsize,
}

impl std::fmt::Debug for MockProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockProvider").field("entries", &self.entries.len()).finish()
    }
}

impl MockProvider {
    pub fn new(entries: Vec<MockEntry>, clock: Arc<dyn Clock>) -> Self {
        MockProvider { entries, clock, calls: AtomicUsize::new(0) }
    }

    pub fn from_jsonl(text: &str, clock: Arc<dyn Clock>) -> Result<Self, MockScriptError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            entries.push(serde_json::from_str(line).map_err(|source| MockScriptError::Line { line: i + 1, source })?);
        }
        Ok(MockProvider::new(entries, clock))
    }

    pub fn from_file(path: &std::path::Path, clock: Arc<dyn Clock>) -> Result<Self, MockScriptError> {
        Self::from_jsonl(&std::fs::read_to_string(path)?, clock)
    }

    /// Provider calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

fn reduce_contains(prompt: &str, needle: &str) -> String {
    let needle = needle.to_lowercase();
    let verdicts: Vec<Value> = prompt
        .lines()
        .filter_map(|line| line.strip_prefix(EVENT_LINE_PREFIX))
        .filter_map(|rest| rest.split_once(']'))
        .map(|(id, summary)| json!({ "id": id, "matches": summary.to_lowercase().contains(&needle) }))
        .collect();
    json!({ "verdicts": verdicts }).to_string()
}

fn echo_line(prompt: &str, prefix: &str) -> String {
    prompt
        .lines()
        .map(str::trim)
        .find(|l| l.starts_with(prefix))
        .map(str::to_string)
        .unwrap_or_else(|| format!("{} not stated in the available information.", prefix.trim_end_matches(':')))
}

impl Provider for MockProvider {
    fn chat(&self, request: &PromptRequest) -> Result<ProviderReply, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = request.last_user_text().unwrap_or_default();
        let entry = self
            .entries
            .iter()
            .find(|e| e.stage_label == request.stage && e.pattern.hits(text))
            .ok_or_else(|| ProviderError {
                message: format!("no scripted response for stage {}", request.stage),
                retriable: false,
            })?;
        if entry.injected_latency_ms > 0 {
            self.clock.sleep(Duration::from_millis(entry.injected_latency_ms));
        }
        let text = match &entry.response {
            MockResponse::Text(t) => t.clone(),
            MockResponse::Json(v) => v.to_string(),
            MockResponse::ReduceContains(needle) => reduce_contains(text, needle),
            MockResponse::EchoLine(prefix) => echo_line(text, prefix),
            MockResponse::Fail(message) => {
                return Err(ProviderError { message: message.clone(), retriable: true });
            }
        };
        Ok(ProviderReply { text, usage: None })
    }

    fn performs_network_io(&self) -> bool {
        false
    }
}
