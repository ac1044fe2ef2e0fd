use std::collections::BTreeMap;

use crate::catalog::{Catalog, Category, EventRecord};
use crate::dialog::SessionState;

/// Personalization scorer for the Recommendation path.
pub trait Recommender: Send + Sync {
    fn score(&self, event: &EventRecord, state: &SessionState) -> f64;
}

/// Stub scorer: `affinity + popularity / (2 (n + 1))`, where `affinity` is the
/// share of the user's `n` past interactions in the event's category and
/// `popularity` is `extra["popularity"]` divided by the catalog maximum.
/// With no history only popularity orders the events.
#[derive(Debug, Clone)]
pub struct CategoryAffinityRecommender {
    categories: BTreeMap<String, Category>,
    max_popularity: f64,
}

pub fn popularity(event: &EventRecord) -> f64 {
    event.extra.get("popularity").and_then(|p| p.trim().parse::<f64>().ok()).filter(|p| *p > 0.0).unwrap_or(0.0)
}

impl CategoryAffinityRecommender {
    pub fn new(catalog: &Catalog) -> Self {
        CategoryAffinityRecommender {
            categories: catalog.events().iter().map(|e| (e.id.clone(), e.category)).collect(),
            max_popularity: catalog.events().iter().map(popularity).fold(0.0, f64::max),
        }
    }
}

impl Recommender for CategoryAffinityRecommender {
    fn score(&self, event: &EventRecord, state: &SessionState) -> f64 {
        let past: Vec<Category> =
            state.past_interaction_ids.iter().filter_map(|id| self.categories.get(id).copied()).collect();
        let n = past.len() as f64;
        let affinity = if past.is_empty() { 0.0 } else { past.iter().filter(|c| **c == event.category).count() as f64 / n };
        let pop = if self.max_popularity > 0.0 { popularity(event) / self.max_popularity } else { 0.0 };
        affinity + pop / (2.0 * (n + 1.0))
    }
}
