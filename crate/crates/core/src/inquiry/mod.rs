//! Answers about one specific event, from a token-bounded dossier built
//! from the catalog record and, when that is sparse, the event's web page.

mod fetch;
mod html;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{render_event_details, Catalog, EventRecord};
use crate::dialog::SessionState;
use crate::gateway::tokenizer::{count_tokens, truncate_to_tokens};
use crate::gateway::{CallLog, Gateway, GatewayError, PromptRequest, Stage};
use crate::prompts::{PromptSet, TARGETED_INQUIRY};

pub use fetch::{FetchConfig, FetchError, Fetcher, HttpFetcher, StaticFetcher};
pub use html::html_to_text;

/// Default dossier size, leaving room for instructions and the question.
pub const DEFAULT_DOSSIER_BUDGET: usize = 2800;
pub const MIN_DOSSIER_BUDGET: usize = 200;
/// Candidates listed when asking the user which event they meant.
pub const MAX_CLARIFY: usize = 3;

const WEBSITE_HEADER: &str = "\n\nFrom the event website:\n";
const INQUIRY_COMPLETION_TOKENS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DossierSource {
    Database,
    Website,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventDossier {
    pub event_id: String,
    pub text: String,
    pub sources: Vec<DossierSource>,
    pub token_length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resolution {
    Target(String),
    /// Ambiguous or unknown referent; up to three candidate ids.
    Clarify(Vec<String>),
}

/// Events the user can be asking about: visible cards, then the last slate.
fn referent_pool(state: &SessionState) -> Vec<String> {
    let mut pool: Vec<String> = state.visible_cards.iter().rev().cloned().collect();
    for id in &state.last_slate {
        if !pool.contains(id) {
            pool.push(id.clone());
        }
    }
    pool
}

/// Pick the event a question refers to. Order of evidence: the detection
/// call's target (if it is in the pool), a title quoted in the question,
/// the only visible card. Anything else asks the user to clarify; the
/// result never leaves visible cards plus the last slate.
pub fn resolve_target(state: &SessionState, question: &str, detected: Option<&str>, catalog: &Catalog) -> Resolution {
    let pool = referent_pool(state);
    if let Some(id) = detected {
        if pool.iter().any(|p| p == id) && catalog.contains(id) {
            return Resolution::Target(id.to_string());
        }
    }
    let q = question.to_lowercase();
    let named: Vec<&String> = pool
        .iter()
        .filter(|id| catalog.get(id).is_some_and(|e| !e.title.trim().is_empty() && q.contains(&e.title.to_lowercase())))
        .collect();
    match named.as_slice() {
        [one] => return Resolution::Target((*one).clone()),
        [_, _, ..] => return Resolution::Clarify(named.into_iter().take(MAX_CLARIFY).cloned().collect()),
        [] => {}
    }
    let visible: Vec<&String> = state.visible_cards.iter().filter(|id| catalog.contains(id)).collect();
    if visible.len() == 1 {
        return Resolution::Target(visible[0].clone());
    }
    if visible.is_empty() && state.last_slate.len() == 1 && catalog.contains(&state.last_slate[0]) {
        return Resolution::Target(state.last_slate[0].clone());
    }
    let options = if visible.is_empty() { state.last_slate.iter().collect() } else { visible };
    Resolution::Clarify(options.into_iter().take(MAX_CLARIFY).cloned().collect())
}

/// Database fields first; when they fill less than half the budget and the
/// event has a URL, stripped page text is appended up to the budget. Page
/// text is cached in `page_cache` so each URL is fetched at most once per
/// session. Returns the dossier and any incidents (failed fetches).
pub fn build_event_dossier(
    event: &EventRecord,
    fetcher: &dyn Fetcher,
    budget: usize,
    page_cache: &mut BTreeMap<String, String>,
) -> (EventDossier, Vec<String>) {
    let budget = budget.max(MIN_DOSSIER_BUDGET);
    let db = render_event_details(event);
    let mut text = truncate_to_tokens(&db, budget).to_string();
    let mut sources = vec![DossierSource::Database];
    let mut incidents = Vec::new();

    if count_tokens(&text) * 2 < budget {
        if let Some(url) = &event.source_url {
            let page = match page_cache.get(url) {
                Some(p) => Some(p.clone()),
                None => match fetcher.fetch(url) {
                    Ok(body) => {
                        let stripped = html_to_text(&body);
                        let kept = truncate_to_tokens(&stripped, budget).to_string();
                        page_cache.insert(url.clone(), kept.clone());
                        Some(kept)
                    }
                    Err(e) => {
                        tracing::warn!(url, error = %e, "event page fetch failed; dossier from database only");
                        incidents.push(format!("fetch of {url} failed: {e}"));
                        None
                    }
                },
            };
            if let Some(page) = page.filter(|p| !p.is_empty()) {
                let room = budget.saturating_sub(count_tokens(&text) + count_tokens(WEBSITE_HEADER));
                let part = truncate_to_tokens(&page, room);
                if !part.is_empty() {
                    text.push_str(WEBSITE_HEADER);
                    text.push_str(part);
                    sources.push(DossierSource::Website);
                }
            }
        }
    }
    let token_length = count_tokens(&text);
    (EventDossier { event_id: event.id.clone(), text, sources, token_length }, incidents)
}

pub fn inquiry_request(
    question: &str,
    dossier: &EventDossier,
    gateway: &Gateway,
    prompts: &PromptSet,
    language: &str,
    max_question_tokens: usize,
) -> PromptRequest {
    let template = prompts.template(TARGETED_INQUIRY).expect("inquiry template present");
    let mut dossier_text = dossier.text.as_str();
    loop {
        let user = format!(
            "Event information:\n{dossier_text}\n\nQuestion: {}",
            truncate_to_tokens(question, max_question_tokens)
        );
        let messages = template.render(&[("language", language)], &user, gateway.schemas()).expect("inquiry slots provided");
        let req = PromptRequest::new(Stage::TargetedInquiry, messages, INQUIRY_COMPLETION_TOKENS);
        let excess = (req.prompt_tokens() + INQUIRY_COMPLETION_TOKENS).saturating_sub(gateway.limit());
        if excess == 0 || dossier_text.is_empty() {
            return req;
        }
        dossier_text = truncate_to_tokens(dossier_text, count_tokens(dossier_text).saturating_sub(excess));
    }
}

/// Ask the model the user's question about the dossier's event.
pub fn answer_inquiry(
    question: &str,
    dossier: &EventDossier,
    gateway: &Gateway,
    prompts: &PromptSet,
    log: &CallLog,
    language: &str,
    max_question_tokens: usize,
) -> Result<String, GatewayError> {
    let req = inquiry_request(question, dossier, gateway, prompts, language, max_question_tokens);
    Ok(gateway.complete(log, &req)?.raw_text.trim().to_string())
}
