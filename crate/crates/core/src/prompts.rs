//! Prompt templates and the user-facing fixed strings, loaded from TOML.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::gateway::{Message, SchemaRegistry, Stage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub stage: Stage,
    /// System text with `{slot}` placeholders.
    pub system: String,
    #[serde(default)]
    pub examples: Vec<FewShotExample>,
    /// Output schema whose format instructions are appended to the system text.
    #[serde(default)]
    pub schema: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("template `{template}` has no value for slot `{slot}`")]
    MissingSlot { template: String, slot: String },
    #[error("template `{template}` refers to unknown schema `{schema}`")]
    UnknownSchema { template: String, schema: String },
    #[error("no template `{0}`")]
    UnknownTemplate(String),
    #[error("prompt configuration: {0}")]
    Config(String),
}

static SLOT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").expect("valid regex"));

/// Replace `{name}` placeholders. Placeholders without a value are left as-is.
pub fn fill(text: &str, slots: &[(&str, &str)]) -> String {
    SLOT.replace_all(text, |c: &regex::Captures<'_>| {
        let name = &c[1];
        slots
            .iter()
            .find(|(k, _)| *k == name)
            .map_or_else(|| c[0].to_string(), |(_, v)| v.to_string())
    })
    .into_owned()
}

impl PromptTemplate {
    /// Slot names used in the system text.
    pub fn slots(&self) -> Vec<String> {
        SLOT.captures_iter(&self.system).map(|c| c[1].to_string()).collect()
    }

    /// System message (filled, plus format instructions), few-shot pairs, and
    /// the user message last.
    pub fn render(
        &self,
        slots: &[(&str, &str)],
        user: &str,
        schemas: &SchemaRegistry,
    ) -> Result<Vec<Message>, PromptError> {
        if let Some(missing) = self.slots().into_iter().find(|s| !slots.iter().any(|(k, _)| k == s)) {
            return Err(PromptError::MissingSlot { template: self.id.clone(), slot: missing });
        }
        let mut system = fill(self.system.trim(), slots);
        if let Some(id) = &self.schema {
            let schema = schemas
                .get(id)
                .ok_or_else(|| PromptError::UnknownSchema { template: self.id.clone(), schema: id.clone() })?;
            system.push_str("\n\n");
            system.push_str(&schema.format_instructions());
        }
        let mut messages = vec![Message::system(system)];
        for ex in &self.examples {
            messages.push(Message::user(ex.input.clone()));
            messages.push(Message::assistant(ex.output.clone()));
        }
        messages.push(Message::user(user));
        Ok(messages)
    }
}

/// Fixed user-facing texts for one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageStrings {
    pub greeting: String,
    pub button_specific: String,
    pub button_general: String,
    pub refusal: String,
    pub ack_specific: String,
    pub ack_general: String,
    pub ack_window: String,
    pub ack_visibility: String,
    pub chat_fallback: String,
    pub empty_result: String,
    pub clarify: String,
    pub clarify_none: String,
    pub failure: String,
    pub answer_fallback: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub default_language: String,
    pub strings: BTreeMap<String, LanguageStrings>,
    #[serde(rename = "template")]
    pub templates: Vec<PromptTemplate>,
}

pub const ACTION_DETECTION: &str = "action_detection";
pub const SEARCH_QUERY: &str = "search_query";
pub const RECOMMENDER_QUERY: &str = "recommender_query";
pub const REDUCTION: &str = "reduction";
pub const ANSWER_CREATION: &str = "answer_creation";
pub const TARGETED_INQUIRY: &str = "targeted_inquiry";

const BUILTIN: &str = include_str!("../config/prompts.toml");

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet::from_toml(BUILTIN).expect("bundled prompt configuration is valid")
    }
}

impl PromptSet {
    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        let set: PromptSet = toml::from_str(text).map_err(|e| PromptError::Config(e.to_string()))?;
        if !set.strings.contains_key(&set.default_language) {
            return Err(PromptError::Config(format!("no strings for default language `{}`", set.default_language)));
        }
        for id in [ACTION_DETECTION, SEARCH_QUERY, RECOMMENDER_QUERY, REDUCTION, ANSWER_CREATION, TARGETED_INQUIRY] {
            set.template(id)?;
        }
        Ok(set)
    }

    pub fn template(&self, id: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates.iter().find(|t| t.id == id).ok_or_else(|| PromptError::UnknownTemplate(id.into()))
    }

    /// Strings for `language`: exact tag, then its primary subtag, then the
    /// default language (logged).
    pub fn strings(&self, language: &str) -> &LanguageStrings {
        let lower = language.to_ascii_lowercase();
        let primary = lower.split('-').next().unwrap_or_default();
        if let Some(s) = self.strings.get(&lower).or_else(|| self.strings.get(primary)) {
            return s;
        }
        tracing::warn!(language, fallback = %self.default_language, "no strings configured for language");
        &self.strings[&self.default_language]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Role;

    #[test]
    fn bundled_set_loads() {
        let set = PromptSet::default();
        assert_eq!(set.templates.len(), 6);
        assert!(set.strings.contains_key("de"));
    }

    #[test]
    fn render_fills_slots_and_appends_format() {
        let set = PromptSet::default();
        let t = set.template(SEARCH_QUERY).unwrap();
        let msgs = t.render(&[("today", "2023-10-18")], "jazz please", &SchemaRegistry::builtin()).unwrap();
        assert!(msgs[0].content.contains("Today is 2023-10-18."));
        assert!(msgs[0].content.contains("\"query\""));
        assert_eq!(msgs.last().unwrap().role, Role::User);
        assert_eq!(msgs.last().unwrap().content, "jazz please");
        assert_eq!(msgs.len(), 2 + 2 * t.examples.len());
    }

    #[test]
    fn missing_slot_is_an_error() {
        let set = PromptSet::default();
        let err = set.template(SEARCH_QUERY).unwrap().render(&[], "x", &SchemaRegistry::builtin()).unwrap_err();
        assert_eq!(err, PromptError::MissingSlot { template: SEARCH_QUERY.into(), slot: "today".into() });
    }

    #[test]
    fn language_fallback() {
        let set = PromptSet::default();
        assert_eq!(set.strings("de-CH").refusal, set.strings["de"].refusal);
        assert_eq!(set.strings("fr").refusal, set.strings["en"].refusal);
    }

    #[test]
    fn fill_leaves_unknown_placeholders() {
        assert_eq!(fill("{a} and {b}", &[("a", "1")]), "1 and {b}");
    }
}
