//! Turn-based session state machine.
//!
//! A text message runs Action Detection and is dispatched to one of five
//! actions; button and visibility events change the session state without
//! any model call.

mod engine;
mod state;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, TimeWindow};
use crate::prompts::PromptSet;
use crate::retrieval::RecommendationSlate;
use crate::telemetry::{PromptMetric, TurnLog, TurnMetric};

pub use engine::{Detection, Engine, EngineConfig, TurnError};
pub use state::{merge_visible, CaseSelection, SessionState, Turn, UserInputEvent, WindowSource, VISIBLE_CARDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    Chat,
    Refusal,
    Search,
    Recommendation,
    TargetedInquiry,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::Chat,
        ActionKind::Refusal,
        ActionKind::Search,
        ActionKind::Recommendation,
        ActionKind::TargetedInquiry,
    ];

    pub fn parse(s: &str) -> Option<ActionKind> {
        ActionKind::ALL.into_iter().find(|a| format!("{a:?}") == s)
    }
}

/// Detection verdict. Chat replies are produced inside the detection call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnAction {
    pub kind: ActionKind,
    pub inline_reply: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    pub turn_id: u64,
    pub assistant_text: String,
    pub slate: Option<RecommendationSlate>,
    pub action_taken: ActionKind,
    pub turn_metrics: Vec<PromptMetric>,
    pub extracted_window: Option<TimeWindow>,
    pub turn_metric: TurnMetric,
    pub log: TurnLog,
}

/// Button payload offered at session start.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseButton {
    pub label: String,
    pub event: UserInputEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Greeting {
    pub text: String,
    pub buttons: Vec<CaseButton>,
}

/// Self-introduction and the two case-selection buttons.
pub fn greeting(prompts: &PromptSet, language: &str) -> Greeting {
    let s = prompts.strings(language);
    Greeting {
        text: s.greeting.clone(),
        buttons: vec![
            CaseButton {
                label: s.button_specific.clone(),
                event: UserInputEvent::CaseSelected { choice: CaseSelection::SpecificSearch },
            },
            CaseButton {
                label: s.button_general.clone(),
                event: UserInputEvent::CaseSelected { choice: CaseSelection::GeneralRecommendation },
            },
        ],
    }
}

/// The configured refusal for `language`, falling back to the default language.
pub fn refusal_response<'a>(prompts: &'a PromptSet, language: &str) -> &'a str {
    &prompts.strings(language).refusal
}

/// Apply a visibility report. Ids unknown to the catalog are dropped and
/// returned.
pub fn record_visibility(state: &SessionState, card_ids: &[String], catalog: &Catalog) -> (SessionState, Vec<String>) {
    let (known, unknown): (Vec<String>, Vec<String>) =
        card_ids.iter().cloned().partition(|id| catalog.contains(id) || state.last_slate.contains(id));
    for id in &unknown {
        tracing::warn!(session = %state.session_id, id, "visibility report for unknown event ignored");
    }
    let mut next = state.clone();
    next.visible_cards = merge_visible(&state.visible_cards, &known);
    (next, unknown)
}
