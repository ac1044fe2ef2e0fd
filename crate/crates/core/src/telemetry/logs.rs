use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PromptExchange, TurnMetric};
use crate::catalog::TimeWindow;
use crate::dialog::{ActionKind, UserInputEvent, WindowSource};
use crate::retrieval::{MatchVerdict, Query};

/// How a turn ended from the user's point of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TurnOutcome {
    /// Button or visibility event, answered without the model.
    Acknowledged,
    /// Chat reply.
    Replied,
    Refused,
    /// Slate shown or inquiry answered.
    Answered,
    /// Search or recommendation found nothing.
    EmptyResult,
    /// Asked the user which event they meant.
    Clarify,
    /// Downstream error, apologetic text returned.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleCard {
    pub event_id: String,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlateEntry {
    pub event_id: String,
    pub title: String,
    pub start_time: DateTime<Utc>,
    pub end_time: Option<DateTime<Utc>>,
    pub city_area: Option<String>,
}

/// Inputs, interim results and outputs of one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnLog {
    pub session_id: String,
    pub turn_id: u64,
    pub timestamp: DateTime<Utc>,
    pub input: UserInputEvent,
    pub action: ActionKind,
    pub outcome: TurnOutcome,
    /// Cards visible when the turn started.
    pub visible_cards: Vec<VisibleCard>,
    /// Window the user stated in this message, whether applied or not.
    pub stated_window: Option<TimeWindow>,
    pub stated_location: Option<String>,
    pub applied_window: TimeWindow,
    pub window_source: WindowSource,
    pub query: Option<Query>,
    pub candidate_ids: Vec<String>,
    pub verdicts: Vec<MatchVerdict>,
    pub slate: Vec<SlateEntry>,
    pub target_event_id: Option<String>,
    pub clarify_candidates: Vec<String>,
    pub assistant_text: String,
    pub incidents: Vec<String>,
    pub metric: TurnMetric,
    pub prompts: Vec<PromptExchange>,
}

impl TurnLog {
    pub fn slate_ids(&self) -> Vec<String> {
        self.slate.iter().map(|s| s.event_id.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    /// One turn per line.
    Jsonl,
    /// A single pretty-printed array.
    Json,
}

fn hash_text(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

fn redacted(log: &TurnLog) -> TurnLog {
    let mut log = log.clone();
    for p in &mut log.prompts {
        for m in &mut p.messages {
            m.content = hash_text(&m.content);
        }
        p.output = hash_text(&p.output);
    }
    log
}

/// Serialize turn logs. With `redact`, prompt texts and raw outputs are
/// replaced by their SHA-256 hashes; every other field is kept.
pub fn export_logs(logs: &[TurnLog], format: LogFormat, redact: bool) -> String {
    let logs: Vec<TurnLog> = if redact { logs.iter().map(redacted).collect() } else { logs.to_vec() };
    match format {
        LogFormat::Jsonl => {
            let mut out = String::new();
            for l in &logs {
                out.push_str(&serde_json::to_string(l).expect("turn logs serialize"));
                out.push('\n');
            }
            out
        }
        LogFormat::Json => serde_json::to_string_pretty(&logs).expect("turn logs serialize"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::default_window;
    use crate::gateway::{Message, Stage};
    use crate::Money;
    use serde_json::Value;

    fn log() -> TurnLog {
        let t = chrono::TimeZone::with_ymd_and_hms(&Utc, 2023, 10, 18, 12, 0, 0).unwrap();
        TurnLog {
            session_id: "s".into(),
            turn_id: 1,
            timestamp: t,
            input: UserInputEvent::text("jazz tonight?"),
            action: ActionKind::Search,
            outcome: TurnOutcome::Answered,
            visible_cards: vec![],
            stated_window: None,
            stated_location: None,
            applied_window: default_window(t),
            window_source: WindowSource::Default,
            query: None,
            candidate_ids: vec!["e1".into(), "e2".into()],
            verdicts: vec![MatchVerdict { event_id: "e1".into(), matches: true }],
            slate: vec![],
            target_event_id: None,
            clarify_candidates: vec![],
            assistant_text: "Here you go".into(),
            incidents: vec![],
            metric: TurnMetric {
                session_id: "s".into(),
                turn_id: 1,
                total_tokens: 0,
                total_cost_usd: Money::ZERO,
                wall_latency_ms: 0,
                prompt_count: 0,
                action_taken: ActionKind::Search,
                timestamp: t,
            },
            prompts: vec![PromptExchange {
                stage: Stage::Search,
                messages: vec![Message::system("secret prompt"), Message::user("jazz tonight?")],
                output: "{\"query\":\"jazz\"}".into(),
            }],
        }
    }

    #[test]
    fn export_is_deterministic() {
        let logs = vec![log(), log()];
        assert_eq!(export_logs(&logs, LogFormat::Jsonl, false), export_logs(&logs, LogFormat::Jsonl, false));
        assert_eq!(export_logs(&logs, LogFormat::Jsonl, false).lines().count(), 2);
    }

    /// Replace every string leaf by a marker so only structure remains.
    fn shape(v: &Value) -> Value {
        match v {
            Value::String(_) => Value::String(String::new()),
            Value::Array(a) => Value::Array(a.iter().map(shape).collect()),
            Value::Object(o) => Value::Object(o.iter().map(|(k, v)| (k.clone(), shape(v))).collect()),
            other => other.clone(),
        }
    }

    #[test]
    fn redaction_hashes_prompts_only() {
        let plain: Value = serde_json::from_str(&export_logs(&[log()], LogFormat::Json, false)).unwrap();
        let red: Value = serde_json::from_str(&export_logs(&[log()], LogFormat::Json, true)).unwrap();
        assert_eq!(shape(&plain), shape(&red));
        let prompt = &red[0]["prompts"][0];
        assert!(prompt["messages"][0]["content"].as_str().unwrap().starts_with("sha256:"));
        assert!(prompt["output"].as_str().unwrap().starts_with("sha256:"));
        assert_eq!(red[0]["candidate_ids"], plain[0]["candidate_ids"]);
        assert_eq!(red[0]["assistant_text"], plain[0]["assistant_text"]);
        assert!(!export_logs(&[log()], LogFormat::Json, true).contains("secret prompt"));
    }
}
