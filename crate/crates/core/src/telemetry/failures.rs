//! Rule-based tagging of unsuccessful sessions.

use serde::{Deserialize, Serialize};

use super::{TurnLog, TurnOutcome};
use crate::dialog::ActionKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureCategory {
    RelevanceMissing,
    TargetedInquiryFailed,
    TimeLocationMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureTag {
    pub session_id: String,
    pub category: FailureCategory,
    /// `turn <id>: <what happened>` references into the session log.
    pub evidence: Vec<String>,
}

/// A slate this small out of this many candidates counts as near-empty.
const NEAR_EMPTY_SLATE: usize = 1;
const NEAR_EMPTY_MIN_CANDIDATES: usize = 5;

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 4)
        .map(str::to_lowercase)
        .collect()
}

/// Does the message point at one of the cards that were on screen?
fn references_visible_card(log: &TurnLog) -> bool {
    if log.visible_cards.is_empty() {
        return false;
    }
    let Some(text) = log.input.as_text() else { return false };
    if text.trim_end().ends_with('?') {
        return true;
    }
    let said = words(text);
    log.visible_cards.iter().any(|c| words(&c.title).iter().any(|w| said.contains(w)))
}

fn relevance_missing(log: &TurnLog) -> Option<String> {
    if !matches!(log.action, ActionKind::Search | ActionKind::Recommendation) || log.candidate_ids.is_empty() {
        return None;
    }
    let n = log.slate.len();
    if n == 0 {
        return Some(format!("turn {}: 0 of {} candidates matched", log.turn_id, log.candidate_ids.len()));
    }
    if n <= NEAR_EMPTY_SLATE && log.candidate_ids.len() >= NEAR_EMPTY_MIN_CANDIDATES {
        return Some(format!("turn {}: {n} of {} candidates matched", log.turn_id, log.candidate_ids.len()));
    }
    None
}

fn mismatch(log: &TurnLog) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(w) = &log.stated_window {
        for e in &log.slate {
            let end = e.end_time.unwrap_or(e.start_time);
            if e.start_time > w.end || end < w.start {
                out.push(format!(
                    "turn {}: {} at {} outside stated window {} to {}",
                    log.turn_id, e.event_id, e.start_time, w.start, w.end
                ));
            }
        }
    }
    if let Some(loc) = &log.stated_location {
        let loc_l = loc.to_lowercase();
        for e in &log.slate {
            if let Some(area) = &e.city_area {
                if !area.to_lowercase().contains(&loc_l) && !loc_l.contains(&area.to_lowercase()) {
                    out.push(format!("turn {}: {} in {area}, user asked for {loc}", log.turn_id, e.event_id));
                }
            }
        }
    }
    out
}

/// Tag a session the user rated unsuccessful. Successful sessions are
/// outside the rules' precondition and get no tags; an unsuccessful session
/// matching no rule is returned untagged (unclassified).
pub fn classify_failures(turns: &[TurnLog], success: bool) -> Vec<FailureTag> {
    if success || turns.is_empty() {
        return Vec::new();
    }
    let session_id = turns[0].session_id.clone();
    let mut relevance = Vec::new();
    let mut inquiry = Vec::new();
    let mut time_loc = Vec::new();
    let mut clarify_run: Vec<u64> = Vec::new();

    for log in turns {
        if log.outcome == TurnOutcome::Acknowledged {
            continue;
        }
        relevance.extend(relevance_missing(log));
        time_loc.extend(mismatch(log));

        let refers = references_visible_card(log);
        if log.outcome == TurnOutcome::Refused && refers {
            inquiry.push(format!("turn {}: question about a visible card was refused", log.turn_id));
        }
        if log.outcome == TurnOutcome::Clarify && refers {
            clarify_run.push(log.turn_id);
            if clarify_run.len() == 2 {
                inquiry.push(format!("turns {} and {}: repeated clarification", clarify_run[0], clarify_run[1]));
            }
        } else {
            clarify_run.clear();
        }
    }

    [
        (FailureCategory::RelevanceMissing, relevance),
        (FailureCategory::TargetedInquiryFailed, inquiry),
        (FailureCategory::TimeLocationMismatch, time_loc),
    ]
    .into_iter()
    .filter(|(_, ev)| !ev.is_empty())
    .map(|(category, evidence)| FailureTag { session_id: session_id.clone(), category, evidence })
    .collect()
}
