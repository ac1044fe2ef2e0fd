//! Per-prompt and per-turn metrics, their aggregation into report tables,
//! session logs and failure tagging.

mod aggregate;
mod failures;
mod logs;
mod metric;
mod store;

pub use aggregate::{
    aggregate, format_latency, format_tokens, MedianCell, MetricsReport, ReportFilter, StageRow, ABSENT_CELL,
    STAGE_HEADERS, SUMMARY_HEADERS,
};
pub use failures::{classify_failures, FailureCategory, FailureTag};
pub use logs::{export_logs, LogFormat, SlateEntry, TurnLog, TurnOutcome, VisibleCard};
pub use metric::{MetricRecord, PromptExchange, PromptMetric, TurnMetric, TurnMetricError};
pub use store::{JsonlStore, MemoryStore, MetricStore, StoreError};
