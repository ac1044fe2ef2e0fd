use super::embedding::{event_text, Embedder};
use super::recommender::Recommender;
use super::vector::rank_order;
use super::{Candidate, CandidateSet, CandidateSource, Query};
use crate::catalog::{Catalog, EventRecord};
use crate::dialog::SessionState;
use crate::EventIndex;

/// Hard filters: window, category, known price above the cap.
fn passes_hard_filters(e: &EventRecord, q: &Query) -> bool {
    e.overlaps(&q.window)
        && q.category_hint.is_none_or(|c| e.category == c)
        && match (&q.price_cap, &e.price) {
            (Some(cap), Some(p)) => p.amount <= *cap,
            _ => true,
        }
}

fn mentions_keyword(e: &EventRecord, keywords: &[String]) -> bool {
    let mut text = event_text(e);
    for extra in [&e.venue_name, &e.city_area].into_iter().flatten() {
        text.push(' ');
        text.push_str(extra);
    }
    let text = text.to_lowercase();
    keywords.iter().any(|k| text.contains(k.as_str()))
}

/// Events passing the query filters. The keyword filter is soft: when no
/// eligible event mentions any keyword, it is dropped rather than emptying
/// the set.
fn eligible<'a>(catalog: &'a Catalog, q: &Query) -> Vec<&'a EventRecord> {
    let hard: Vec<&EventRecord> = catalog.events().iter().filter(|e| passes_hard_filters(e, q)).collect();
    if q.keywords.is_empty() {
        return hard;
    }
    let with_kw: Vec<&EventRecord> = hard.iter().copied().filter(|e| mentions_keyword(e, &q.keywords)).collect();
    if with_kw.is_empty() {
        hard
    } else {
        with_kw
    }
}

fn unverified(e: &EventRecord, q: &Query) -> bool {
    q.price_cap.is_some() && e.price.is_none()
}

pub fn build_search_candidates(
    query: &Query,
    catalog: &Catalog,
    index: &EventIndex,
    embedder: &dyn Embedder,
    max: usize,
) -> CandidateSet {
    let pool = eligible(catalog, query);
    let mut text = query.search_text.clone();
    for k in &query.keywords {
        text.push(' ');
        text.push_str(k);
    }
    if let Some(c) = query.category_hint {
        text.push(' ');
        text.push_str(c.label());
    }
    let qv = embedder.embed(&text);
    let allowed: std::collections::HashSet<&str> = pool.iter().map(|e| e.id.as_str()).collect();
    let items = index
        .search(&qv, max, |id| allowed.contains(id))
        .into_iter()
        .map(|s| Candidate {
            price_unverified: catalog.get(&s.id).is_some_and(|e| unverified(e, query)),
            event_id: s.id,
            score: f64::from(s.score),
        })
        .collect();
    CandidateSet { items, source: CandidateSource::VectorSearch }
}

pub fn build_recommendation_candidates(
    state: &SessionState,
    query: &Query,
    catalog: &Catalog,
    recommender: &dyn Recommender,
    max: usize,
) -> CandidateSet {
    let mut items: Vec<Candidate> = eligible(catalog, query)
        .into_iter()
        .map(|e| Candidate {
            event_id: e.id.clone(),
            score: recommender.score(e, state),
            price_unverified: unverified(e, query),
        })
        .collect();
    items.sort_by(|a, b| rank_order((&a.score, &a.event_id), (&b.score, &b.event_id)));
    items.truncate(max);
    CandidateSet { items, source: CandidateSource::Recommender }
}
