use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::MetricRecord;
use crate::gateway::Stage;
use crate::scalar::median;
use crate::Money;

/// Restricts which records enter a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportFilter {
    pub since: Option<DateTime<Utc>>,
    pub until: Option<DateTime<Utc>>,
    pub sessions: Option<BTreeSet<String>>,
}

impl ReportFilter {
    fn admits(&self, rec: &MetricRecord) -> bool {
        let t = rec.timestamp();
        self.since.is_none_or(|s| t >= s)
            && self.until.is_none_or(|u| t < u)
            && self.sessions.as_ref().is_none_or(|set| set.contains(rec.session_id()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: Stage,
    pub label: String,
    /// Median over messages of the stage's summed tokens in that message.
    pub median_tokens: Option<f64>,
    /// Median over messages of the stage's summed call latency in that message.
    pub median_latency_ms: Option<f64>,
    pub messages: usize,
    pub calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianCell {
    pub median_tokens: Option<f64>,
    pub median_latency_ms: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub stages: Vec<StageRow>,
    /// Over turns that made at least one LLM call.
    pub per_message: MedianCell,
    /// Over sessions; a session's value is the sum over its LLM-bearing turns.
    pub per_session: MedianCell,
    pub total_tokens: usize,
    #[serde(with = "rust_decimal::serde::str")]
    pub total_cost_usd: Money,
    #[serde(default, with = "crate::scalar::opt_money")]
    pub median_cost_per_message_usd: Option<Money>,
    pub prompt_count: usize,
    pub turn_count: usize,
}

fn median_of(values: Vec<f64>) -> Option<f64> {
    median(&values)
}

/// Aggregate a metric snapshot into per-stage, per-message and per-session
/// medians. Pure function of `records` and `filter`.
pub fn aggregate(records: &[MetricRecord], filter: &ReportFilter) -> MetricsReport {
    // (stage) -> (session, turn) -> (tokens, latency, calls)
    let mut per_stage: BTreeMap<Stage, BTreeMap<(String, u64), (usize, u64, usize)>> = BTreeMap::new();
    let mut message_tokens = Vec::new();
    let mut message_latency = Vec::new();
    let mut message_cost = Vec::new();
    let mut sessions: BTreeMap<String, (usize, u64)> = BTreeMap::new();
    let mut total_tokens = 0;
    let mut total_cost = Decimal::ZERO;
    let mut prompt_count = 0;
    let mut turn_count = 0;

    for rec in records.iter().filter(|r| filter.admits(r)) {
        match rec {
            MetricRecord::Prompt(p) => {
                prompt_count += 1;
                total_tokens += p.usage.total_tokens;
                total_cost += p.cost_usd;
                let cell = per_stage
                    .entry(p.stage)
                    .or_default()
                    .entry((p.session_id.clone(), p.turn_id))
                    .or_default();
                cell.0 += p.usage.total_tokens;
                cell.1 += p.latency_ms;
                cell.2 += 1;
            }
            MetricRecord::Turn(t) => {
                turn_count += 1;
                if t.prompt_count == 0 {
                    continue;
                }
                message_tokens.push(t.total_tokens as f64);
                message_latency.push(t.wall_latency_ms as f64);
                message_cost.push(t.total_cost_usd);
                let s = sessions.entry(t.session_id.clone()).or_default();
                s.0 += t.total_tokens;
                s.1 += t.wall_latency_ms;
            }
        }
    }

    let stages = Stage::ALL
        .iter()
        .map(|&stage| {
            let cells = per_stage.remove(&stage).unwrap_or_default();
            StageRow {
                stage,
                label: stage.report_label().to_string(),
                median_tokens: median_of(cells.values().map(|c| c.0 as f64).collect()),
                median_latency_ms: median_of(cells.values().map(|c| c.1 as f64).collect()),
                messages: cells.len(),
                calls: cells.values().map(|c| c.2).sum(),
            }
        })
        .collect();

    message_cost.sort();
    let median_cost = match message_cost.len() {
        0 => None,
        n if n % 2 == 1 => Some(message_cost[n / 2]),
        n => Some((message_cost[n / 2 - 1] + message_cost[n / 2]) / Decimal::TWO),
    };

    MetricsReport {
        stages,
        per_message: MedianCell {
            count: message_tokens.len(),
            median_tokens: median_of(message_tokens),
            median_latency_ms: median_of(message_latency),
        },
        per_session: MedianCell {
            count: sessions.len(),
            median_tokens: median_of(sessions.values().map(|s| s.0 as f64).collect()),
            median_latency_ms: median_of(sessions.values().map(|s| s.1 as f64).collect()),
        },
        total_tokens,
        total_cost_usd: total_cost,
        median_cost_per_message_usd: median_cost,
        prompt_count,
        turn_count,
    }
}

/// Marker printed for cells without observations.
pub const ABSENT_CELL: &str = "-";

pub const SUMMARY_HEADERS: [&str; 4] = [
    "Median tokens used per chat message",
    "Median tokens used per chat session",
    "Median latency per message",
    "Median latency per chat session",
];

pub const STAGE_HEADERS: [&str; 3] = ["Phase/ action", "Median tokens used per chat message", "Median latency per message"];

pub fn format_tokens(v: Option<f64>) -> String {
    v.map_or_else(|| ABSENT_CELL.to_string(), |t| format!("{t}"))
}

/// Seconds, shortest exact decimal form (2700 ms prints as `2.7s`).
pub fn format_latency(ms: Option<f64>) -> String {
    ms.map_or_else(|| ABSENT_CELL.to_string(), |ms| format!("{}s", ms / 1000.0))
}

fn write_table(out: &mut String, rows: &[Vec<String>]) {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{cell:<width$}", width = widths[i]))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
}

impl MetricsReport {
    /// Aligned-column text rendering: the message/session summary table
    /// followed by the per-stage table.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        write_table(
            &mut out,
            &[
                SUMMARY_HEADERS.iter().map(|s| s.to_string()).collect(),
                vec![
                    format_tokens(self.per_message.median_tokens),
                    format_tokens(self.per_session.median_tokens),
                    format_latency(self.per_message.median_latency_ms),
                    format_latency(self.per_session.median_latency_ms),
                ],
            ],
        );
        out.push('\n');
        let mut rows = vec![STAGE_HEADERS.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
        for r in &self.stages {
            rows.push(vec![r.label.clone(), format_tokens(r.median_tokens), format_latency(r.median_latency_ms)]);
        }
        write_table(&mut out, &rows);
        let _ = writeln!(
            out,
            "\nmessages: {}  sessions: {}  prompts: {}  total tokens: {}  total cost: ${}",
            self.per_message.count, self.per_session.count, self.prompt_count, self.total_tokens, self.total_cost_usd
        );
        out
    }

    pub fn stage(&self, stage: Stage) -> &StageRow {
        self.stages.iter().find(|r| r.stage == stage).expect("every stage has a row")
    }
}
