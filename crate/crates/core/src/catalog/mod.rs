//! Sparse scraped event corpus.
//!
//! Records come from web scrapers and are frequently incomplete. Everything
//! optional stays `None` when the source did not provide it; nothing in this
//! module invents a value for an absent field.

mod ingest;
mod summary;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::Money;

pub use ingest::{ingest_catalog, ingest_jsonl, CategoryMap, IngestReport, Rejection, RejectReason};
pub use summary::{render_event_details, summarize_event, EventSummary, SUMMARY_MIN_BUDGET};

/// Days covered by the default search window.
pub const DEFAULT_WINDOW_DAYS: i64 = 150;

/// Closed event category set. Raw scraped labels that the mapping table does
/// not know end up as [`Category::Other`].
///
/// The source material only names "Other" explicitly; the remaining members
/// are a stand-in taxonomy for a city events listing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Concert,
    StandUpComedy,
    Theater,
    Sports,
    Market,
    Workshop,
    Party,
    Exhibition,
    Other,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Concert,
        Category::StandUpComedy,
        Category::Theater,
        Category::Sports,
        Category::Market,
        Category::Workshop,
        Category::Party,
        Category::Exhibition,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Concert => "Concert",
            Category::StandUpComedy => "StandUpComedy",
            Category::Theater => "Theater",
            Category::Sports => "Sports",
            Category::Market => "Market",
            Category::Workshop => "Workshop",
            Category::Party => "Party",
            Category::Exhibition => "Exhibition",
            Category::Other => "Other",
        }
    }

    /// Human readable label used in prompts and summaries.
    pub fn label(self) -> &'static str {
        match self {
            Category::StandUpComedy => "Stand-up comedy",
            other => other.as_str(),
        }
    }

    pub fn parse_canonical(s: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Non-negative amount with explicit currency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Price {
    #[serde(with = "rust_decimal::serde::str")]
    pub amount: Money,
    pub currency: String,
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.amount, self.currency)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub id: String,
    pub title: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub category: Category,
    pub start_time: DateTime<Utc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end_time: Option<DateTime<Utc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub venue_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub city_area: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price: Option<Price>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
    pub language: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl EventRecord {
    /// End of the event's occupied interval; point events end at their start.
    pub fn effective_end(&self) -> DateTime<Utc> {
        self.end_time.unwrap_or(self.start_time)
    }

    pub fn overlaps(&self, window: &TimeWindow) -> bool {
        self.start_time <= window.end && self.effective_end() >= window.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("window end {end} precedes start {start}")]
pub struct InvalidWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self, InvalidWindow> {
        if start > end {
            return Err(InvalidWindow { start, end });
        }
        Ok(TimeWindow { start, end })
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn duration(&self) -> Duration {
        self.end - self.start
    }
}

/// The default search horizon: `[now, now + 150 days]`.
pub fn default_window(now: DateTime<Utc>) -> TimeWindow {
    TimeWindow {
        start: now,
        end: now + Duration::days(DEFAULT_WINDOW_DAYS),
    }
}

/// Immutable, id-indexed event collection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    events: Vec<EventRecord>,
    by_id: HashMap<String, usize>,
}

impl Catalog {
    pub(crate) fn from_accepted(events: Vec<EventRecord>) -> Self {
        let by_id = events.iter().enumerate().map(|(i, e)| (e.id.clone(), i)).collect();
        Catalog { events, by_id }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn get(&self, id: &str) -> Option<&EventRecord> {
        self.by_id.get(id).map(|&i| &self.events[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn count_in_category(&self, category: Category) -> usize {
        self.events.iter().filter(|e| e.category == category).count()
    }

    /// JSON Lines dump; re-ingesting it reproduces this catalog.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Events whose `[start, end-or-start]` interval intersects `window`, in
/// catalog order.
pub fn filter_by_window<'a>(catalog: &'a Catalog, window: &TimeWindow) -> Vec<&'a EventRecord> {
    catalog.events().iter().filter(|e| e.overlaps(window)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn at(days: i64) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 10, 18, 0, 0, 0).unwrap() + Duration::days(days)
    }

    fn event(id: &str, start: DateTime<Utc>, end: Option<DateTime<Utc>>) -> EventRecord {
        EventRecord {
            id: id.into(),
            title: format!("Event {id}"),
            description: None,
            category: Category::Other,
            start_time: start,
            end_time: end,
            venue_name: None,
            city_area: None,
            price: None,
            source_url: None,
            language: "de".into(),
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn default_window_is_150_days() {
        let now = Utc.with_ymd_and_hms(2023, 10, 18, 0, 0, 0).unwrap();
        let w = default_window(now);
        assert_eq!(w.start, now);
        // 150 * 86400 s later; crosses the 2024 leap day
        assert_eq!(w.end, Utc.with_ymd_and_hms(2024, 3, 16, 0, 0, 0).unwrap());
        assert_eq!(w.duration().num_seconds(), 150 * 86_400);
        assert_eq!(default_window(now), w);
    }

    #[test]
    fn window_rejects_inverted_bounds() {
        assert!(TimeWindow::new(at(2), at(1)).is_err());
        assert!(TimeWindow::new(at(1), at(1)).is_ok());
    }

    #[test]
    fn window_filter_edges() {
        let cat = Catalog::from_accepted(vec![
            event("far", at(200), None),
            event("spans", at(-3), Some(at(2))),
            event("before", at(-3), Some(at(-1))),
            event("inside", at(10), None),
        ]);
        let w = default_window(at(0));
        let ids: Vec<_> = filter_by_window(&cat, &w).iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["spans", "inside"]);
    }

    #[test]
    fn window_filter_matches_fixture_oracle() {
        // 20 events, start offsets and optional durations (days)
        let spec: [(i64, Option<i64>); 20] = [
            (-10, None), (-10, Some(5)), (-10, Some(12)), (0, None), (1, Some(1)),
            (3, None), (5, Some(30)), (7, None), (9, Some(2)), (10, None),
            (11, None), (12, Some(1)), (14, None), (15, None), (20, Some(100)),
            (30, None), (-1, Some(1)), (-2, Some(1)), (13, Some(0)), (100, None),
        ];
        let events: Vec<_> = spec
            .iter()
            .enumerate()
            .map(|(i, (s, d))| event(&format!("e{i:02}"), at(*s), d.map(|d| at(s + d))))
            .collect();
        let cat = Catalog::from_accepted(events);
        let w = TimeWindow::new(at(0), at(12)).unwrap();
        // hand evaluation of [s, s+d] ∩ [0, 12]
        let expected = [
            "e02", "e03", "e04", "e05", "e06", "e07", "e08", "e09", "e10", "e11", "e16",
        ];
        let got: Vec<_> = filter_by_window(&cat, &w).iter().map(|e| e.id.clone()).collect();
        assert_eq!(got, expected);
    }

    proptest! {
        #[test]
        fn window_filter_equals_brute_force(
            spans in prop::collection::vec((-400i64..400, prop::option::of(0i64..50)), 0..1000),
            ws in -400i64..400,
            wlen in 0i64..300,
        ) {
            let events: Vec<_> = spans
                .iter()
                .enumerate()
                .map(|(i, (s, d))| event(&format!("e{i}"), at(*s), d.map(|d| at(s + d))))
                .collect();
            let cat = Catalog::from_accepted(events.clone());
            let w = TimeWindow::new(at(ws), at(ws + wlen)).unwrap();
            let got: Vec<_> = filter_by_window(&cat, &w).into_iter().cloned().collect();
            let mut brute = Vec::new();
            for e in &events {
                let end = e.end_time.unwrap_or(e.start_time);
                let disjoint = end < w.start || e.start_time > w.end;
                if !disjoint {
                    brute.push(e.clone());
                }
            }
            prop_assert_eq!(got, brute);
        }
    }
}
