use std::collections::HashMap;

use serde_json::Value;

use super::{CandidateSet, MatchVerdict, Query, RetrievalConfig};
use crate::catalog::{summarize_event, Catalog, EventRecord, SUMMARY_MIN_BUDGET};
use crate::gateway::mock::EVENT_LINE_PREFIX;
use crate::gateway::tokenizer::truncate_to_tokens;
use crate::gateway::{CallLog, Gateway, GatewayError, PromptRequest};
use crate::prompts::{PromptSet, REDUCTION};

#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    /// One verdict per candidate, in candidate order.
    pub verdicts: Vec<MatchVerdict>,
    pub incidents: Vec<String>,
}

/// Completion allowance for a batch: roughly one short JSON entry per event.
fn completion_budget(n: usize) -> usize {
    48 + 16 * n
}

/// The request block shared by every batch of a turn.
pub(crate) fn request_block(query: &Query, max_tokens: usize) -> String {
    let mut s = format!("Request: {}", truncate_to_tokens(&query.raw_text, max_tokens));
    if query.search_text != query.raw_text {
        s.push_str(&format!("\nInterpreted as: {}", truncate_to_tokens(&query.search_text, max_tokens / 2)));
    }
    if !query.keywords.is_empty() {
        let kw = query.keywords.join(", ");
        s.push_str(&format!("\nKeywords: {}", truncate_to_tokens(&kw, max_tokens / 4)));
    }
    if let Some(c) = query.category_hint {
        s.push_str(&format!("\nCategory: {}", c.label()));
    }
    if let Some(p) = query.price_cap {
        s.push_str(&format!("\nMaximum price: {p}"));
    }
    s
}

fn batch_request(
    gateway: &Gateway,
    prompts: &PromptSet,
    request: &str,
    events: &[&EventRecord],
    max_summary: usize,
) -> PromptRequest {
    let render = |budget: usize| {
        let mut user = format!("{request}\n\nEvents:\n");
        for e in events {
            let s = summarize_event(e, budget);
            user.push_str(&format!("{EVENT_LINE_PREFIX}{}] {}\n", e.id, s.summary_text));
        }
        let messages = prompts
            .template(REDUCTION)
            .and_then(|t| t.render(&[], &user, gateway.schemas()))
            .expect("reduction template renders without slots");
        PromptRequest::new(crate::gateway::Stage::Reduction, messages, completion_budget(events.len()))
            .with_schema(crate::gateway::schema::REDUCTION)
    };
    // size the per-event budget from the fixed overhead, then shrink until it fits
    let overhead = render(SUMMARY_MIN_BUDGET).prompt_tokens();
    let free = gateway.limit().saturating_sub(overhead + completion_budget(events.len()));
    let mut budget = (SUMMARY_MIN_BUDGET + free / events.len().max(1)).clamp(SUMMARY_MIN_BUDGET, max_summary.max(SUMMARY_MIN_BUDGET));
    loop {
        let req = render(budget);
        if req.fits(gateway.limit()) || budget == SUMMARY_MIN_BUDGET {
            return req;
        }
        budget = (budget * 3 / 4).max(SUMMARY_MIN_BUDGET);
    }
}

fn verdicts_from(parsed: &Value, events: &[&EventRecord], incidents: &mut Vec<String>) -> Vec<MatchVerdict> {
    let mut by_id: HashMap<&str, bool> = HashMap::new();
    for v in parsed["verdicts"].as_array().into_iter().flatten() {
        if let (Some(id), Some(m)) = (v.get("id").and_then(Value::as_str), v.get("matches").and_then(Value::as_bool)) {
            by_id.entry(id).or_insert(m);
        }
    }
    events
        .iter()
        .map(|e| {
            let matches = by_id.get(e.id.as_str()).copied().unwrap_or_else(|| {
                incidents.push(format!("reduction gave no verdict for {}; treated as no match", e.id));
                false
            });
            MatchVerdict { event_id: e.id.clone(), matches }
        })
        .collect()
}

fn run_batch(
    gateway: &Gateway,
    log: &CallLog,
    req: &PromptRequest,
    events: &[&EventRecord],
) -> Result<(Vec<MatchVerdict>, Vec<String>), GatewayError> {
    let mut incidents = Vec::new();
    match gateway.complete(log, req) {
        Ok(res) => {
            let parsed = res.parsed.expect("schema requests carry a parsed value");
            Ok((verdicts_from(&parsed, events, &mut incidents), incidents))
        }
        Err(GatewayError::Parse(e)) => {
            incidents.push(format!(
                "reduction batch starting at {} unreadable ({e}); all {} marked as no match",
                events[0].id,
                events.len()
            ));
            let v = events.iter().map(|e| MatchVerdict { event_id: e.id.clone(), matches: false }).collect();
            Ok((v, incidents))
        }
        Err(e) => Err(e),
    }
}

/// Judge every candidate with batched Reduction prompts of at most
/// `config.batch_size` events each. A batch whose reply cannot be parsed
/// yields `matches = false` for all its events.
pub fn reduce_candidates(
    query: &Query,
    candidates: &CandidateSet,
    catalog: &Catalog,
    gateway: &Gateway,
    prompts: &PromptSet,
    log: &CallLog,
    config: &RetrievalConfig,
) -> Result<Reduction, GatewayError> {
    let events: Vec<&EventRecord> = candidates
        .items
        .iter()
        .map(|c| catalog.get(&c.event_id).expect("candidates come from the catalog"))
        .collect();
    let request = request_block(query, config.max_request_tokens);
    let batches: Vec<(&[&EventRecord], PromptRequest)> = events
        .chunks(config.batch_size.max(1))
        .map(|chunk| (chunk, batch_request(gateway, prompts, &request, chunk, config.max_summary_tokens)))
        .collect();

    let results: Vec<Result<(Vec<MatchVerdict>, Vec<String>), GatewayError>> =
        if config.parallel_batches && batches.len() > 1 && !gateway.clock().is_simulated() {
            let children: Vec<CallLog> = batches.iter().map(|_| log.child()).collect();
            let results = std::thread::scope(|s| {
                let handles: Vec<_> = batches
                    .iter()
                    .zip(&children)
                    .map(|((chunk, req), child)| s.spawn(move || run_batch(gateway, child, req, chunk)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("reduction batch panicked")).collect()
            });
            for child in children {
                log.absorb(child);
            }
            results
        } else {
            batches.iter().map(|(chunk, req)| run_batch(gateway, log, req, chunk)).collect()
        };

    let mut out = Reduction { verdicts: Vec::with_capacity(events.len()), incidents: Vec::new() };
    for r in results {
        let (v, inc) = r?;
        out.verdicts.extend(v);
        out.incidents.extend(inc);
    }
    Ok(out)
}
