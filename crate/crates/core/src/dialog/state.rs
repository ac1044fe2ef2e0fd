use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::ActionKind;
use crate::catalog::{default_window, TimeWindow};

/// Which case-selection button the user pressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseSelection {
    SpecificSearch,
    GeneralRecommendation,
}

/// Where the active time window came from. A `ButtonSet` window is only
/// ever replaced by another button press.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowSource {
    Default,
    ButtonSet,
    ChatExtracted,
}

/// Something the user did in the front end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UserInputEvent {
    TextMessage { text: String },
    CaseSelected { choice: CaseSelection },
    WindowSet { window: TimeWindow },
    CardVisibility { card_ids: Vec<String> },
}

impl UserInputEvent {
    pub fn text(text: impl Into<String>) -> Self {
        UserInputEvent::TextMessage { text: text.into() }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            UserInputEvent::TextMessage { text } => Some(text),
            _ => None,
        }
    }
}

/// One finished turn as kept in the session history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_id: u64,
    pub input: UserInputEvent,
    pub action: ActionKind,
    pub assistant_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slate_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub language: String,
    pub created_at: DateTime<Utc>,
    pub case_selection: Option<CaseSelection>,
    pub time_window: TimeWindow,
    pub window_source: WindowSource,
    pub history: Vec<Turn>,
    /// At most three ids, most recently seen last.
    pub visible_cards: Vec<String>,
    pub past_interaction_ids: Vec<String>,
    /// Ids of the most recent slate shown.
    pub last_slate: Vec<String>,
    /// Location the user stated in chat, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stated_location: Option<String>,
    /// Stripped web page text by URL, fetched for dossiers.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub page_cache: BTreeMap<String, String>,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>, language: impl Into<String>, now: DateTime<Utc>) -> Self {
        SessionState {
            session_id: session_id.into(),
            language: language.into(),
            created_at: now,
            case_selection: None,
            time_window: default_window(now),
            window_source: WindowSource::Default,
            history: Vec::new(),
            visible_cards: Vec::new(),
            past_interaction_ids: Vec::new(),
            last_slate: Vec::new(),
            stated_location: None,
            page_cache: BTreeMap::new(),
        }
    }

    pub fn next_turn_id(&self) -> u64 {
        self.history.len() as u64 + 1
    }

    /// Number of turns taken so far.
    pub fn turn_count(&self) -> usize {
        self.history.len()
    }
}

/// Maximum number of cards tracked as visible.
pub const VISIBLE_CARDS: usize = 3;

/// Merge newly reported card ids into `visible`: the result is the last
/// three distinct ids in arrival order, a repeated id moving to the end.
pub fn merge_visible(visible: &[String], reported: &[String]) -> Vec<String> {
    let mut out: Vec<String> = visible.to_vec();
    for id in reported {
        out.retain(|x| x != id);
        out.push(id.clone());
    }
    let skip = out.len().saturating_sub(VISIBLE_CARDS);
    out.split_off(skip)
}
