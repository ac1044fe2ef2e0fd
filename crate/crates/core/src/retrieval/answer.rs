use super::reduce::request_block;
use super::{detail_link, CandidateSet, MatchVerdict, Query, RecommendationSlate, RetrievalConfig, SlateCard};
use crate::catalog::{summarize_event, Catalog, Category, EventRecord, SUMMARY_MIN_BUDGET};
use crate::gateway::{CallLog, Gateway, PromptRequest, Stage};
use crate::prompts::{fill, PromptSet, ANSWER_CREATION};

const ANSWER_COMPLETION_TOKENS: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub text: String,
    pub slate: Option<RecommendationSlate>,
    /// True when no event matched and the empty-result template was used.
    pub empty: bool,
    pub incidents: Vec<String>,
}

fn card(e: &EventRecord, budget: usize, price_unverified: bool) -> SlateCard {
    SlateCard {
        event_id: e.id.clone(),
        title: e.title.clone(),
        summary_text: summarize_event(e, budget).summary_text,
        detail_link: detail_link(&e.id),
        start_time: e.start_time,
        end_time: e.end_time,
        city_area: e.city_area.clone(),
        price_unverified,
    }
}

/// Most common category among the matched events (ties to the earlier one).
fn dominant_category(events: &[&EventRecord]) -> Option<Category> {
    let mut best: Option<(Category, usize)> = None;
    for e in events {
        let n = events.iter().filter(|x| x.category == e.category).count();
        if best.is_none_or(|(_, m)| n > m) {
            best = Some((e.category, n));
        }
    }
    best.map(|(c, _)| c)
}

fn answer_request(
    gateway: &Gateway,
    prompts: &PromptSet,
    query: &Query,
    matched: &[&EventRecord],
    slots: &[(&str, &str)],
    config: &RetrievalConfig,
) -> PromptRequest {
    let template = prompts.template(ANSWER_CREATION).expect("answer template present");
    let request = request_block(query, config.max_request_tokens);
    let mut budget = config.card_summary_tokens.max(SUMMARY_MIN_BUDGET);
    loop {
        let mut user = format!("{request}\n\nMatching events:\n");
        for e in matched {
            user.push_str(&format!("- {}\n", summarize_event(e, budget).summary_text));
        }
        let messages = template.render(slots, &user, gateway.schemas()).expect("answer template slots provided");
        let req = PromptRequest::new(Stage::AnswerCreation, messages, ANSWER_COMPLETION_TOKENS);
        if req.fits(gateway.limit()) || budget == SUMMARY_MIN_BUDGET {
            return req;
        }
        budget = (budget * 3 / 4).max(SUMMARY_MIN_BUDGET);
    }
}

/// Slate of matched candidates in candidate order, capped at the slate size,
/// plus the reply text. Without matches the reply is the empty-result
/// template and no model call is made.
#[allow(clippy::too_many_arguments)]
pub fn compose_answer(
    query: &Query,
    verdicts: &[MatchVerdict],
    candidates: &CandidateSet,
    catalog: &Catalog,
    gateway: &Gateway,
    prompts: &PromptSet,
    log: &CallLog,
    config: &RetrievalConfig,
) -> Answer {
    let strings = prompts.strings(&query.language);
    let matched: Vec<_> = candidates
        .items
        .iter()
        .filter(|c| verdicts.iter().any(|v| v.event_id == c.event_id && v.matches))
        .take(config.slate_size)
        .collect();
    if matched.is_empty() {
        let start = query.window.start.format("%Y-%m-%d").to_string();
        let end = query.window.end.format("%Y-%m-%d").to_string();
        return Answer {
            text: fill(&strings.empty_result, &[("start", &start), ("end", &end)]),
            slate: None,
            empty: true,
            incidents: Vec::new(),
        };
    }
    let events: Vec<&EventRecord> =
        matched.iter().map(|c| catalog.get(&c.event_id).expect("candidates come from the catalog")).collect();
    let slate = RecommendationSlate {
        cards: matched
            .iter()
            .zip(&events)
            .map(|(c, e)| card(e, config.card_summary_tokens, c.price_unverified))
            .collect(),
        derived_from: candidates.source,
    };

    let category = query.category_hint.or_else(|| dominant_category(&events)).unwrap_or(Category::Other);
    let match_count = verdicts.iter().filter(|v| v.matches).count().to_string();
    let candidate_count = candidates.len().to_string();
    let category_count = catalog.count_in_category(category).to_string();
    let slots = [
        ("match_count", match_count.as_str()),
        ("candidate_count", candidate_count.as_str()),
        ("category_count", category_count.as_str()),
        ("category", category.label()),
        ("language", query.language.as_str()),
    ];
    let req = answer_request(gateway, prompts, query, &events, &slots, config);
    let mut incidents = Vec::new();
    let text = match gateway.complete(log, &req) {
        Ok(r) if !r.raw_text.trim().is_empty() => r.raw_text.trim().to_string(),
        Ok(_) => {
            incidents.push("answer creation returned empty text; template used".into());
            fill(&strings.answer_fallback, &[("count", &slate.cards.len().to_string())])
        }
        Err(e) => {
            incidents.push(format!("answer creation failed ({e}); template used"));
            fill(&strings.answer_fallback, &[("count", &slate.cards.len().to_string())])
        }
    };
    Answer { text, slate: Some(slate), empty: false, incidents }
}
