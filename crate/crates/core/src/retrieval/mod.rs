//! Search and Recommendation workflows: candidate sets, batched LLM
//! reduction to binary match verdicts, and answer composition.

mod answer;
mod candidates;
pub mod embedding;
mod recommender;
mod reduce;
pub mod vector;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog::{Category, TimeWindow};
use crate::Money;

pub use answer::{compose_answer, Answer};
pub use candidates::{build_recommendation_candidates, build_search_candidates};
pub use embedding::{Embedder, HashedBagOfWords};
pub use recommender::{CategoryAffinityRecommender, Recommender};
pub use reduce::{reduce_candidates, Reduction};
pub use vector::{vector_search, ScoredId, VectorIndex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Candidates kept before reduction.
    pub candidate_max: usize,
    pub slate_size: usize,
    /// Events judged per Reduction prompt.
    pub batch_size: usize,
    /// Upper bound on one event's summary inside a Reduction prompt.
    pub max_summary_tokens: usize,
    /// Summary size for events listed in the answer prompt and on cards.
    pub card_summary_tokens: usize,
    /// Cap on the user's request text inside prompts.
    pub max_request_tokens: usize,
    /// Run Reduction batches on separate threads (ignored under a simulated clock).
    pub parallel_batches: bool,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            candidate_max: 30,
            slate_size: 10,
            batch_size: 10,
            max_summary_tokens: 300,
            card_summary_tokens: 120,
            max_request_tokens: 300,
            parallel_batches: true,
        }
    }
}

/// A structured retrieval request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    /// The user's message as typed.
    pub raw_text: String,
    /// Text the candidates are embedded against (model rewrite or raw text).
    pub search_text: String,
    pub keywords: Vec<String>,
    pub window: TimeWindow,
    pub language: String,
    #[serde(default, with = "crate::scalar::opt_money")]
    pub price_cap: Option<Money>,
    pub category_hint: Option<Category>,
}

impl Query {
    pub fn new(raw_text: &str, window: TimeWindow, language: &str) -> Self {
        Query {
            raw_text: raw_text.to_string(),
            search_text: raw_text.to_string(),
            keywords: Vec::new(),
            window,
            language: language.to_string(),
            price_cap: None,
            category_hint: None,
        }
    }

    /// Merge fields from a `search_query` or `recommender_query` reply.
    pub fn apply_structured(&mut self, v: &Value) {
        if let Some(s) = v.get("query").or_else(|| v.get("preference")).and_then(Value::as_str) {
            if !s.trim().is_empty() {
                self.search_text = s.trim().to_string();
            }
        }
        if let Some(kw) = v.get("keywords").and_then(Value::as_array) {
            self.add_keywords(kw.iter().filter_map(Value::as_str));
        }
        if let Some(c) = v.get("category").and_then(Value::as_str) {
            self.category_hint = Category::parse_canonical(c);
        }
        if let Some(p) = v.get("max_price").and_then(Value::as_f64) {
            if p >= 0.0 {
                self.price_cap = Money::try_from(p).ok().map(|m| m.normalize());
            }
        }
    }

    pub fn add_keywords<'a>(&mut self, words: impl IntoIterator<Item = &'a str>) {
        for w in words {
            let w = w.trim().to_lowercase();
            if !w.is_empty() && !self.keywords.contains(&w) {
                self.keywords.push(w);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateSource {
    VectorSearch,
    Recommender,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub event_id: String,
    pub score: f64,
    /// Kept under a price cap only because its price is unknown.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub price_unverified: bool,
}

/// Candidates in non-increasing score order, ties by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub items: Vec<Candidate>,
    pub source: CandidateSource,
}

impl CandidateSet {
    pub fn ids(&self) -> Vec<String> {
        self.items.iter().map(|c| c.event_id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchVerdict {
    pub event_id: String,
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlateCard {
    pub event_id: String,
    pub title: String,
    pub summary_text: String,
    pub detail_link: String,
    pub start_time: chrono::DateTime<chrono::Utc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end_time: Option<chrono::DateTime<chrono::Utc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub city_area: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub price_unverified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationSlate {
    pub cards: Vec<SlateCard>,
    pub derived_from: CandidateSource,
}

impl RecommendationSlate {
    pub fn ids(&self) -> Vec<String> {
        self.cards.iter().map(|c| c.event_id.clone()).collect()
    }
}

/// Link the front end follows for a card's details.
pub fn detail_link(event_id: &str) -> String {
    format!("/v1/events/{event_id}")
}
