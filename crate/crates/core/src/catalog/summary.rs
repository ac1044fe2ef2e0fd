use serde::{Deserialize, Serialize};

use super::EventRecord;
use crate::gateway::tokenizer::{count_tokens, truncate_to_tokens};

/// Smallest budget `summarize_event` accepts; smaller values are raised to it.
pub const SUMMARY_MIN_BUDGET: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSummary {
    pub event_id: String,
    pub summary_text: String,
    pub token_length: usize,
}

/// Summary fields in inclusion priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SummaryField {
    Title,
    Time,
    Category,
    Price,
    Venue,
    Description,
}

const TIME_FMT: &str = "%Y-%m-%d %H:%M UTC";

fn render_field(event: &EventRecord, field: SummaryField) -> Option<String> {
    match field {
        SummaryField::Title => Some(format!("{}.", event.title)),
        SummaryField::Time => Some(match event.end_time {
            Some(end) if end != event.start_time => format!(
                "When: {} until {}.",
                event.start_time.format(TIME_FMT),
                end.format(TIME_FMT)
            ),
            _ => format!("When: {}.", event.start_time.format(TIME_FMT)),
        }),
        SummaryField::Category => Some(format!("Category: {}.", event.category.label())),
        SummaryField::Price => event.price.as_ref().map(|p| format!("Price: {p}.")),
        SummaryField::Venue => match (&event.venue_name, &event.city_area) {
            (Some(v), Some(a)) => Some(format!("Venue: {v}, {a}.")),
            (Some(v), None) => Some(format!("Venue: {v}.")),
            (None, Some(a)) => Some(format!("Area: {a}.")),
            (None, None) => None,
        },
        SummaryField::Description => event.description.as_ref().map(|d| format!("Description: {d}")),
    }
}

pub(crate) const PRIORITY: [SummaryField; 6] = [
    SummaryField::Title,
    SummaryField::Time,
    SummaryField::Category,
    SummaryField::Price,
    SummaryField::Venue,
    SummaryField::Description,
];

#[cfg(test)]
/// Fields of `event` that a summary with `budget` tokens contains, in order.
pub(crate) fn summary_fields(event: &EventRecord, budget: usize) -> Vec<SummaryField> {
    summarize_parts(event, budget).into_iter().map(|(f, _)| f).collect()
}

fn summarize_parts(event: &EventRecord, budget: usize) -> Vec<(SummaryField, String)> {
    let budget = budget.max(SUMMARY_MIN_BUDGET);
    let mut parts: Vec<(SummaryField, String)> = Vec::new();
    let mut used = 0;
    for field in PRIORITY {
        let Some(text) = render_field(event, field) else { continue };
        // parts are joined by single spaces, so token counts add up exactly
        let cost = count_tokens(&text);
        if used + cost <= budget {
            used += cost;
            parts.push((field, text));
            continue;
        }
        let remaining = budget - used;
        let truncatable = matches!(field, SummaryField::Title | SummaryField::Description);
        // keep at least a few content tokens plus the trailing ellipsis
        if truncatable && remaining >= 4 {
            let cut = truncate_to_tokens(&text, remaining - 1);
            parts.push((field, format!("{cut}…")));
        }
        break;
    }
    parts
}

/// Single-paragraph, token-bounded rendering of the fields present on
/// `event`. Fields are added in the fixed order title, time, category, price,
/// venue, description; the first field that does not fit ends the summary
/// (title and description are cut at a token boundary instead).
pub fn summarize_event(event: &EventRecord, budget: usize) -> EventSummary {
    let text = summarize_parts(event, budget)
        .into_iter()
        .map(|(_, t)| t)
        .collect::<Vec<_>>()
        .join(" ");
    EventSummary {
        event_id: event.id.clone(),
        token_length: count_tokens(&text),
        summary_text: text,
    }
}

/// Unbounded multi-line rendering of every present field, used for dossiers.
pub fn render_event_details(event: &EventRecord) -> String {
    let mut lines = vec![format!("Title: {}", event.title)];
    lines.push(format!("Starts: {}", event.start_time.format(TIME_FMT)));
    if let Some(end) = event.end_time {
        lines.push(format!("Ends: {}", end.format(TIME_FMT)));
    }
    lines.push(format!("Category: {}", event.category.label()));
    if let Some(p) = &event.price {
        lines.push(format!("Price: {p}"));
    }
    if let Some(v) = &event.venue_name {
        lines.push(format!("Venue: {v}"));
    }
    if let Some(a) = &event.city_area {
        lines.push(format!("Area: {a}"));
    }
    if let Some(u) = &event.source_url {
        lines.push(format!("Website: {u}"));
    }
    for (k, v) in &event.extra {
        lines.push(format!("{k}: {v}"));
    }
    if let Some(d) = &event.description {
        lines.push(format!("Description: {d}"));
    }
    lines.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Category, Price};
    use chrono::{TimeZone, Utc};
    use std::collections::BTreeMap;

    fn bare() -> EventRecord {
        EventRecord {
            id: "e1".into(),
            title: "Jazz im Keller".into(),
            description: None,
            category: Category::Other,
            start_time: Utc.with_ymd_and_hms(2023, 11, 3, 20, 0, 0).unwrap(),
            end_time: None,
            venue_name: None,
            city_area: None,
            price: None,
            source_url: None,
            language: "de".into(),
            extra: BTreeMap::new(),
        }
    }

    fn rich(desc_words: usize) -> EventRecord {
        EventRecord {
            description: Some(vec!["saxophone"; desc_words].join(" ")),
            category: Category::Concert,
            venue_name: Some("Moods".into()),
            city_area: Some("Kreis 5".into()),
            price: Some(Price { amount: "25.00".parse().unwrap(), currency: "CHF".into() }),
            ..bare()
        }
    }

    #[test]
    fn sparse_record_has_no_placeholders() {
        let s = summarize_event(&bare(), 200);
        assert!(s.summary_text.contains("Jazz im Keller"));
        assert!(s.summary_text.contains("2023-11-03 20:00 UTC"));
        for absent in ["Price", "Venue", "Area", "Description", "unknown", "n/a", "None"] {
            assert!(!s.summary_text.contains(absent), "{absent} leaked into {:?}", s.summary_text);
        }
        assert_eq!(s.token_length, count_tokens(&s.summary_text));
    }

    #[test]
    fn long_description_respects_budget() {
        // "saxophone" is 3 tokens, so 1700 words is over 5000 tokens
        let e = rich(1700);
        assert!(count_tokens(e.description.as_deref().unwrap()) > 5000);
        let s = summarize_event(&e, 200);
        assert!(s.token_length <= 200);
        assert!(s.summary_text.contains("Price: 25.00 CHF."));
    }

    #[test]
    fn smaller_budget_is_priority_prefix() {
        let priority_index = |f: SummaryField| PRIORITY.iter().position(|p| *p == f).unwrap();
        for words in [0, 5, 40, 400] {
            let e = rich(words);
            let small = summary_fields(&e, 100);
            let large = summary_fields(&e, 200);
            assert!(large.starts_with(&small), "{small:?} vs {large:?}");
            // fields are in priority order
            let idx: Vec<_> = large.iter().map(|f| priority_index(*f)).collect();
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn tight_budget_cuts_before_price() {
        let e = EventRecord { title: vec!["word"; 30].join(" "), ..rich(3) };
        let s = summarize_event(&e, 32);
        assert!(s.token_length <= 32);
        assert!(!s.summary_text.contains("Price"));
    }

    #[test]
    fn deterministic() {
        let e = rich(50);
        assert_eq!(summarize_event(&e, 64), summarize_event(&e, 64));
    }
}
