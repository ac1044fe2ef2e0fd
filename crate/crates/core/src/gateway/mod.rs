//! Uniform LLM interface.
//!
//! Every request is checked against the context budget before a provider is
//! contacted; every completed provider call produces one [`PromptMetric`]
//! in the caller's [`CallLog`].

pub mod cost;
mod http;
pub(crate) mod mock;
pub mod schema;
pub mod tokenizer;

use std::fmt;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clock::{elapsed_ms, Clock};
use crate::telemetry::{PromptExchange, PromptMetric};
use crate::{UsdRate, CONTEXT_TOKEN_LIMIT};

pub use cost::{cost_of, CostRate};
pub use http::{HttpProvider, HttpProviderConfig};
pub use mock::{MockEntry, MockMatch, MockProvider, MockResponse, MockScriptError};
pub use schema::{parse_structured, ParseError, Schema, SchemaRegistry};
pub use tokenizer::count_tokens;

/// Pipeline stage issuing a prompt; the rows of the per-stage report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    ActionDetection,
    TargetedInquiry,
    Search,
    Recommender,
    Reduction,
    AnswerCreation,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::ActionDetection,
        Stage::TargetedInquiry,
        Stage::Search,
        Stage::Recommender,
        Stage::Reduction,
        Stage::AnswerCreation,
    ];

    /// Row label in the per-stage metrics table.
    pub fn report_label(self) -> &'static str {
        match self {
            Stage::ActionDetection => "Action Detection (including Chat, Refusal)",
            Stage::TargetedInquiry => "Targeted Inquiry",
            Stage::Search => "Search",
            Stage::Recommender => "Recommender",
            Stage::Reduction => "Reduction",
            Stage::AnswerCreation => "Answer creation",
        }
    }

    /// Classification-style stages run at temperature 0.
    pub fn default_temperature(self) -> f32 {
        match self {
            Stage::AnswerCreation => 0.7,
            Stage::TargetedInquiry => 0.2,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub stage: Stage,
    pub messages: Vec<Message>,
    pub output_schema: Option<String>,
    pub max_completion_tokens: usize,
    pub temperature: f32,
}

impl PromptRequest {
    pub fn new(stage: Stage, messages: Vec<Message>, max_completion_tokens: usize) -> Self {
        PromptRequest {
            stage,
            messages,
            output_schema: None,
            max_completion_tokens,
            temperature: stage.default_temperature(),
        }
    }

    pub fn with_schema(mut self, schema_id: &str) -> Self {
        self.output_schema = Some(schema_id.to_string());
        self
    }

    /// Estimated prompt size: the sum of the message contents' token counts.
    pub fn prompt_tokens(&self) -> usize {
        self.messages.iter().map(|m| count_tokens(&m.content)).sum()
    }

    /// Last user message, if any.
    pub fn last_user_text(&self) -> Option<&str> {
        self.messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str())
    }

    pub fn fits(&self, limit: usize) -> bool {
        self.prompt_tokens() + self.max_completion_tokens <= limit
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: usize,
    pub completion_tokens: usize,
    pub total_tokens: usize,
}

impl TokenUsage {
    pub fn new(prompt_tokens: usize, completion_tokens: usize) -> Self {
        TokenUsage { prompt_tokens, completion_tokens, total_tokens: prompt_tokens + completion_tokens }
    }
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, rhs: TokenUsage) -> TokenUsage {
        TokenUsage::new(self.prompt_tokens + rhs.prompt_tokens, self.completion_tokens + rhs.completion_tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub raw_text: String,
    pub parsed: Option<Value>,
    /// Summed over the original call and a repair re-ask, if one happened.
    pub usage: TokenUsage,
    pub latency_ms: u64,
    pub attempts: u8,
}

/// What a provider returns for one call.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    /// Authoritative usage reported by the provider, when it reports one.
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("provider error: {message}")]
pub struct ProviderError {
    pub message: String,
    pub retriable: bool,
}

pub trait Provider: Send + Sync {
    fn chat(&self, request: &PromptRequest) -> Result<ProviderReply, ProviderError>;

    /// Whether calls leave the process.
    fn performs_network_io(&self) -> bool;
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("request needs {prompt_tokens} prompt + {max_completion_tokens} completion tokens, over the {limit}-token limit")]
    BudgetExceeded { prompt_tokens: usize, max_completion_tokens: usize, limit: usize },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("could not parse structured reply: {0}")]
    Parse(ParseError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// One completed provider call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub metric: PromptMetric,
    pub exchange: PromptExchange,
}

/// Per-turn collector of completed calls. Concurrent stages write into child
/// logs which are absorbed back in a fixed order.
#[derive(Debug)]
pub struct CallLog {
    session_id: String,
    turn_id: u64,
    calls: Mutex<Vec<CallRecord>>,
}

impl CallLog {
    pub fn new(session_id: impl Into<String>, turn_id: u64) -> Self {
        CallLog { session_id: session_id.into(), turn_id, calls: Mutex::new(Vec::new()) }
    }

    pub fn child(&self) -> CallLog {
        CallLog::new(self.session_id.clone(), self.turn_id)
    }

    pub fn absorb(&self, child: CallLog) {
        self.calls.lock().extend(child.calls.into_inner());
    }

    pub fn push(&self, record: CallRecord) {
        self.calls.lock().push(record);
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.calls.lock().clone()
    }

    pub fn into_records(self) -> Vec<CallRecord> {
        self.calls.into_inner()
    }

    pub fn len(&self) -> usize {
        self.calls.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

const REPAIR_INSTRUCTION: &str = "Your previous reply could not be read ({reason}). Reply again with only the JSON object described in the format instructions.";

pub struct Gateway {
    provider: Arc<dyn Provider>,
    schemas: SchemaRegistry,
    rate: UsdRate,
    clock: Arc<dyn Clock>,
    limit: usize,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, rate: UsdRate, clock: Arc<dyn Clock>) -> Self {
        Gateway { provider, schemas: SchemaRegistry::builtin(), rate, clock, limit: CONTEXT_TOKEN_LIMIT }
    }

    pub fn schemas(&self) -> &SchemaRegistry {
        &self.schemas
    }

    pub fn rate(&self) -> &UsdRate {
        &self.rate
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn performs_network_io(&self) -> bool {
        self.provider.performs_network_io()
    }

    pub fn check_budget(&self, request: &PromptRequest) -> Result<(), GatewayError> {
        let prompt_tokens = request.prompt_tokens();
        if prompt_tokens + request.max_completion_tokens > self.limit {
            return Err(GatewayError::BudgetExceeded {
                prompt_tokens,
                max_completion_tokens: request.max_completion_tokens,
                limit: self.limit,
            });
        }
        Ok(())
    }

    fn call_once(&self, log: &CallLog, request: &PromptRequest) -> Result<(ProviderReply, TokenUsage, u64), GatewayError> {
        self.check_budget(request)?;
        let started = self.clock.now();
        let reply = self.provider.chat(request)?;
        let latency_ms = elapsed_ms(started, self.clock.now());
        let usage = reply
            .usage
            .unwrap_or_else(|| TokenUsage::new(request.prompt_tokens(), count_tokens(&reply.text)));
        log.push(CallRecord {
            metric: PromptMetric {
                session_id: log.session_id.clone(),
                turn_id: log.turn_id,
                stage: request.stage,
                usage,
                latency_ms,
                cost_usd: cost_of(&usage, &self.rate),
                timestamp: started,
            },
            exchange: PromptExchange {
                stage: request.stage,
                messages: request.messages.clone(),
                output: reply.text.clone(),
            },
        });
        Ok((reply, usage, latency_ms))
    }

    /// Run one request. With an output schema, a reply that fails to parse
    /// triggers exactly one repair re-ask before [`GatewayError::Parse`].
    pub fn complete(&self, log: &CallLog, request: &PromptRequest) -> Result<CompletionResult, GatewayError> {
        if request.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("no messages".into()));
        }
        if !(0.0..=2.0).contains(&request.temperature) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} outside [0, 2]", request.temperature)));
        }
        let schema = match &request.output_schema {
            Some(id) => Some(
                self.schemas
                    .get(id)
                    .ok_or_else(|| GatewayError::InvalidRequest(format!("unknown schema `{id}`")))?,
            ),
            None => None,
        };
        let (reply, usage, latency_ms) = self.call_once(log, request)?;
        let Some(schema) = schema else {
            return Ok(CompletionResult { raw_text: reply.text, parsed: None, usage, latency_ms, attempts: 1 });
        };
        let err = match parse_structured(&reply.text, schema) {
            Ok(v) => {
                return Ok(CompletionResult { raw_text: reply.text, parsed: Some(v), usage, latency_ms, attempts: 1 })
            }
            Err(e) => e,
        };
        tracing::warn!(stage = %request.stage, error = %err, "structured reply failed to parse; re-asking once");
        let mut repair = request.clone();
        repair.messages.push(Message::user(REPAIR_INSTRUCTION.replace("{reason}", &err.to_string())));
        if self.check_budget(&repair).is_err() {
            return Err(GatewayError::Parse(err));
        }
        let (reply2, usage2, latency2) = self.call_once(log, &repair)?;
        let parsed = parse_structured(&reply2.text, schema).map_err(GatewayError::Parse)?;
        Ok(CompletionResult {
            raw_text: reply2.text,
            parsed: Some(parsed),
            usage: usage + usage2,
            latency_ms: latency_ms + latency2,
            attempts: 2,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{SimulatedClock, SystemClock};
    use chrono::Utc;
    use serde_json::json;

    fn gateway(script: &str) -> (Gateway, Arc<MockProvider>) {
        let clock: Arc<dyn Clock> = Arc::new(SimulatedClock::starting_at(Utc::now()));
        let mock = Arc::new(MockProvider::from_jsonl(script, clock.clone()).unwrap());
        (Gateway::new(mock.clone(), UsdRate::default(), clock), mock)
    }

    fn detection(text: &str) -> PromptRequest {
        PromptRequest::new(Stage::ActionDetection, vec![Message::system("classify"), Message::user(text)], 64)
            .with_schema(schema::ACTION_DETECTION)
    }

    #[test]
    fn scripted_reply_is_parsed() {
        let (gw, _) = gateway(r#"{"stage_label":"ActionDetection","match":"hello","response":{"action":"Chat","reply":"Hi!"}}"#);
        let log = CallLog::new("s", 1);
        let res = gw.complete(&log, &detection("hello")).unwrap();
        assert_eq!(res.parsed, Some(json!({"action": "Chat", "reply": "Hi!"})));
        assert_eq!(log.len(), 1);
        let rec = &log.records()[0];
        assert_eq!(rec.metric.stage, Stage::ActionDetection);
        assert_eq!(rec.metric.usage, res.usage);
        assert_eq!(rec.metric.cost_usd, cost_of(&res.usage, gw.rate()));
    }

    #[test]
    fn over_budget_is_rejected_before_calling() {
        let (gw, mock) = gateway(r#"{"stage_label":"Search","match":"","response":"ok"}"#);
        // 4000 one-token words plus 200 completion tokens
        let prompt = vec!["a"; 4000].join(" ");
        let req = PromptRequest::new(Stage::Search, vec![Message::user(prompt)], 200);
        assert_eq!(req.prompt_tokens(), 4000);
        let log = CallLog::new("s", 1);
        let err = gw.complete(&log, &req).unwrap_err();
        assert!(matches!(err, GatewayError::BudgetExceeded { prompt_tokens: 4000, max_completion_tokens: 200, limit: 4096 }));
        assert_eq!(mock.calls(), 0);
        assert!(log.is_empty());
    }

    #[test]
    fn budget_boundary_is_inclusive() {
        let (gw, mock) = gateway(r#"{"stage_label":"Search","match":"","response":"ok"}"#);
        let prompt = vec!["a"; 3896].join(" ");
        let req = PromptRequest::new(Stage::Search, vec![Message::user(prompt)], 200);
        gw.complete(&CallLog::new("s", 1), &req).unwrap();
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn one_repair_then_success() {
        let script = [
            r#"{"stage_label":"ActionDetection","match":{"regex":"could not be read"},"response":{"action":"Search"}}"#,
            r#"{"stage_label":"ActionDetection","match":"","response":"I think this is a search."}"#,
        ]
        .join("\n");
        let (gw, mock) = gateway(&script);
        let log = CallLog::new("s", 1);
        let res = gw.complete(&log, &detection("jazz tonight")).unwrap();
        assert_eq!(res.attempts, 2);
        assert_eq!(mock.calls(), 2);
        assert_eq!(log.len(), 2);
        assert_eq!(res.usage, log.records()[0].metric.usage + log.records()[1].metric.usage);
    }

    #[test]
    fn two_parse_failures_error() {
        let (gw, mock) = gateway(r#"{"stage_label":"ActionDetection","match":"","response":"no idea"}"#);
        let err = gw.complete(&CallLog::new("s", 1), &detection("x")).unwrap_err();
        assert!(matches!(err, GatewayError::Parse(_)));
        assert_eq!(mock.calls(), 2);
    }

    #[test]
    fn provider_failure_is_surfaced() {
        let (gw, _) = gateway(r#"{"stage_label":"Search","match":"","response":{"$fail":"upstream 503"}}"#);
        let req = PromptRequest::new(Stage::Search, vec![Message::user("q")], 10);
        let err = gw.complete(&CallLog::new("s", 1), &req).unwrap_err();
        assert!(matches!(err, GatewayError::Provider(ProviderError { retriable: true, .. })));
    }

    #[test]
    fn injected_latency_is_measured() {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock);
        let mock = MockProvider::from_jsonl(
            r#"{"stage_label":"Search","match":"","response":"ok","injected_latency_ms":1200}"#,
            clock.clone(),
        )
        .unwrap();
        let gw = Gateway::new(Arc::new(mock), UsdRate::default(), clock);
        let req = PromptRequest::new(Stage::Search, vec![Message::user("q")], 10);
        let res = gw.complete(&CallLog::new("s", 1), &req).unwrap();
        assert!(res.latency_ms >= 1200, "{}", res.latency_ms);
        assert!(res.latency_ms <= 1200 + 50, "{}", res.latency_ms);
    }

    #[test]
    fn authoritative_usage_overrides_estimate() {
        struct Fixed;
        impl Provider for Fixed {
            fn chat(&self, _: &PromptRequest) -> Result<ProviderReply, ProviderError> {
                Ok(ProviderReply { text: "hi".into(), usage: Some(TokenUsage::new(100, 7)) })
            }
            fn performs_network_io(&self) -> bool {
                false
            }
        }
        let gw = Gateway::new(Arc::new(Fixed), UsdRate::default(), Arc::new(SystemClock));
        let req = PromptRequest::new(Stage::AnswerCreation, vec![Message::user("q")], 10);
        let res = gw.complete(&CallLog::new("s", 1), &req).unwrap();
        assert_eq!(res.usage.total_tokens, 107);
    }
}
