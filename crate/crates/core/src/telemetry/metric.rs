use chrono::{DateTime, Utc};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use crate::dialog::ActionKind;
use crate::gateway::{Message, Stage, TokenUsage};
use crate::Money;

/// One completed LLM call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptMetric {
    pub session_id: String,
    pub turn_id: u64,
    pub stage: Stage,
    pub usage: TokenUsage,
    pub latency_ms: u64,
    #[serde(with = "rust_decimal::serde::str")]
    pub cost_usd: Money,
    pub timestamp: DateTime<Utc>,
}

/// Prompt text and raw output of one call, kept for session logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptExchange {
    pub stage: Stage,
    pub messages: Vec<Message>,
    pub output: String,
}

/// One user turn, front of engine to reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnMetric {
    pub session_id: String,
    pub turn_id: u64,
    pub total_tokens: usize,
    #[serde(with = "rust_decimal::serde::str")]
    pub total_cost_usd: Money,
    pub wall_latency_ms: u64,
    pub prompt_count: usize,
    pub action_taken: ActionKind,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TurnMetricError {
    #[error("turn total {declared} tokens differs from the {summed} summed over its prompts")]
    TokenMismatch { declared: usize, summed: usize },
    #[error("wall latency {wall} ms below the slowest prompt ({slowest} ms)")]
    LatencyBelowPrompt { wall: u64, slowest: u64 },
    #[error("prompt metric belongs to session {session_id} turn {turn_id}")]
    ForeignPrompt { session_id: String, turn_id: u64 },
}

impl TurnMetric {
    /// Build a turn metric, checking it against the prompts it contains.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        session_id: &str,
        turn_id: u64,
        total_tokens: usize,
        total_cost_usd: Money,
        wall_latency_ms: u64,
        action_taken: ActionKind,
        timestamp: DateTime<Utc>,
        prompts: &[PromptMetric],
    ) -> Result<Self, TurnMetricError> {
        if let Some(p) = prompts.iter().find(|p| p.session_id != session_id || p.turn_id != turn_id) {
            return Err(TurnMetricError::ForeignPrompt { session_id: p.session_id.clone(), turn_id: p.turn_id });
        }
        let summed: usize = prompts.iter().map(|p| p.usage.total_tokens).sum();
        if summed != total_tokens {
            return Err(TurnMetricError::TokenMismatch { declared: total_tokens, summed });
        }
        let slowest = prompts.iter().map(|p| p.latency_ms).max().unwrap_or(0);
        if wall_latency_ms < slowest {
            return Err(TurnMetricError::LatencyBelowPrompt { wall: wall_latency_ms, slowest });
        }
        Ok(TurnMetric {
            session_id: session_id.to_string(),
            turn_id,
            total_tokens,
            total_cost_usd,
            wall_latency_ms,
            prompt_count: prompts.len(),
            action_taken,
            timestamp,
        })
    }

    /// Derive totals from `prompts`. Wall latency is raised to the slowest
    /// prompt if the measured value is lower (clock granularity).
    pub fn from_prompts(
        session_id: &str,
        turn_id: u64,
        wall_latency_ms: u64,
        action_taken: ActionKind,
        timestamp: DateTime<Utc>,
        prompts: &[PromptMetric],
    ) -> Self {
        let total_tokens = prompts.iter().map(|p| p.usage.total_tokens).sum();
        let total_cost: Decimal = prompts.iter().map(|p| p.cost_usd).sum();
        let slowest = prompts.iter().map(|p| p.latency_ms).max().unwrap_or(0);
        TurnMetric::new(
            session_id,
            turn_id,
            total_tokens,
            total_cost,
            wall_latency_ms.max(slowest),
            action_taken,
            timestamp,
            prompts,
        )
        .expect("totals derived from the prompts themselves")
    }
}

/// A line in the metric store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricRecord {
    Prompt(PromptMetric),
    Turn(TurnMetric),
}

impl MetricRecord {
    pub fn timestamp(&self) -> DateTime<Utc> {
        match self {
            MetricRecord::Prompt(p) => p.timestamp,
            MetricRecord::Turn(t) => t.timestamp,
        }
    }

    pub fn session_id(&self) -> &str {
        match self {
            MetricRecord::Prompt(p) => &p.session_id,
            MetricRecord::Turn(t) => &t.session_id,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn prompt(tokens: usize, latency_ms: u64) -> PromptMetric {
        PromptMetric {
            session_id: "s".into(),
            turn_id: 1,
            stage: Stage::Search,
            usage: TokenUsage::new(tokens, 0),
            latency_ms,
            cost_usd: Money::ZERO,
            timestamp: Utc.with_ymd_and_hms(2023, 10, 18, 12, 0, 0).unwrap(),
        }
    }

    #[test]
    fn mismatched_total_is_rejected() {
        let prompts = [prompt(10, 5), prompt(20, 7)];
        let t = Utc::now();
        let err = TurnMetric::new("s", 1, 31, Money::ZERO, 10, ActionKind::Search, t, &prompts).unwrap_err();
        assert_eq!(err, TurnMetricError::TokenMismatch { declared: 31, summed: 30 });
        assert!(TurnMetric::new("s", 1, 30, Money::ZERO, 10, ActionKind::Search, t, &prompts).is_ok());
        assert!(matches!(
            TurnMetric::new("s", 1, 30, Money::ZERO, 6, ActionKind::Search, t, &prompts),
            Err(TurnMetricError::LatencyBelowPrompt { .. })
        ));
    }

    #[test]
    fn record_serializes_with_kind_tag() {
        let rec = MetricRecord::Prompt(prompt(3, 1));
        let text = serde_json::to_string(&rec).unwrap();
        assert!(text.starts_with("{\"kind\":\"prompt\""));
        assert_eq!(serde_json::from_str::<MetricRecord>(&text).unwrap(), rec);
    }
}
