use std::collections::HashSet;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::state::{SessionState, Turn, UserInputEvent, WindowSource};
use super::{record_visibility, refusal_response, ActionKind, CaseSelection, TurnAction, TurnResult};
use crate::catalog::{summarize_event, Catalog, TimeWindow, SUMMARY_MIN_BUDGET};
use crate::clock::elapsed_ms;
use crate::gateway::tokenizer::truncate_to_tokens;
use crate::gateway::{schema, CallLog, Gateway, GatewayError, PromptRequest, Stage};
use crate::inquiry::{answer_inquiry, build_event_dossier, resolve_target, Fetcher, Resolution, StaticFetcher, DEFAULT_DOSSIER_BUDGET};
use crate::prompts::{fill, PromptSet, ACTION_DETECTION, RECOMMENDER_QUERY, SEARCH_QUERY};
use crate::retrieval::{
    build_recommendation_candidates, build_search_candidates, compose_answer, reduce_candidates,
    CategoryAffinityRecommender, Embedder, HashedBagOfWords, MatchVerdict, Query, RecommendationSlate, Recommender,
    RetrievalConfig,
};
use crate::telemetry::{MetricRecord, MetricStore, SlateEntry, TurnLog, TurnMetric, TurnOutcome, VisibleCard};
use crate::EventIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Past turns included in the detection prompt.
    pub history_turns: usize,
    pub history_turn_tokens: usize,
    /// Cap on the user's message inside any prompt.
    pub max_user_tokens: usize,
    pub detection_completion_tokens: usize,
    pub query_completion_tokens: usize,
    /// Summary size for visible cards in the detection prompt.
    pub card_context_tokens: usize,
    pub dossier_budget: usize,
    pub retrieval: RetrievalConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            history_turns: 6,
            history_turn_tokens: 80,
            max_user_tokens: 300,
            detection_completion_tokens: 300,
            query_completion_tokens: 200,
            card_context_tokens: 80,
            dossier_budget: DEFAULT_DOSSIER_BUDGET,
            retrieval: RetrievalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TurnError {
    #[error("session {0} already has a turn in progress")]
    ConcurrentTurn(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// What Action Detection extracted from one message.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub action: TurnAction,
    pub time_window: Option<TimeWindow>,
    pub location: Option<String>,
    pub target_event_id: Option<String>,
    pub keywords: Vec<String>,
    pub incidents: Vec<String>,
}

impl Detection {
    fn refusal(incident: String) -> Self {
        Detection {
            action: TurnAction { kind: ActionKind::Refusal, inline_reply: None },
            time_window: None,
            location: None,
            target_event_id: None,
            keywords: Vec::new(),
            incidents: vec![incident],
        }
    }
}

fn parse_time(v: &Value) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(v.as_str()?).ok().map(|t| t.with_timezone(&Utc))
}

fn detection_from(v: &Value) -> Detection {
    let mut incidents = Vec::new();
    let kind = v["action"].as_str().and_then(ActionKind::parse).unwrap_or(ActionKind::Refusal);
    let text = |k: &str| v.get(k).and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty()).map(String::from);
    let time_window = match v.get("time_window").filter(|w| !w.is_null()) {
        Some(w) => match (parse_time(&w["start"]), parse_time(&w["end"])) {
            (Some(s), Some(e)) => TimeWindow::new(s, e)
                .map_err(|e| incidents.push(format!("stated time window ignored: {e}")))
                .ok(),
            _ => {
                incidents.push("stated time window ignored: timestamps not RFC 3339".into());
                None
            }
        },
        None => None,
    };
    Detection {
        action: TurnAction { kind, inline_reply: if kind == ActionKind::Chat { text("reply") } else { None } },
        time_window,
        location: text("location"),
        target_event_id: text("target_event_id"),
        keywords: v
            .get("keywords")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(String::from).collect())
            .unwrap_or_default(),
        incidents,
    }
}

/// Per-turn scratch record that becomes the turn log.
struct TurnWork {
    action: ActionKind,
    outcome: TurnOutcome,
    text: String,
    slate: Option<RecommendationSlate>,
    query: Option<Query>,
    candidate_ids: Vec<String>,
    verdicts: Vec<MatchVerdict>,
    target: Option<String>,
    clarify: Vec<String>,
    stated_window: Option<TimeWindow>,
    stated_location: Option<String>,
    incidents: Vec<String>,
}

impl TurnWork {
    fn new(action: ActionKind, outcome: TurnOutcome) -> Self {
        TurnWork {
            action,
            outcome,
            text: String::new(),
            slate: None,
            query: None,
            candidate_ids: Vec::new(),
            verdicts: Vec::new(),
            target: None,
            clarify: Vec::new(),
            stated_window: None,
            stated_location: None,
            incidents: Vec::new(),
        }
    }
}

struct InFlight<'a> {
    set: &'a Mutex<HashSet<String>>,
    id: String,
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.set.lock().remove(&self.id);
    }
}

pub struct Engine {
    catalog: Arc<Catalog>,
    index: Arc<EventIndex>,
    embedder: Arc<dyn Embedder>,
    recommender: Arc<dyn Recommender>,
    fetcher: Arc<dyn Fetcher>,
    gateway: Arc<Gateway>,
    store: Arc<dyn MetricStore>,
    prompts: Arc<PromptSet>,
    config: EngineConfig,
    in_flight: Mutex<HashSet<String>>,
}

impl Engine {
    /// Engine with the hashed bag-of-words index, the category-affinity
    /// recommender, bundled prompts and an offline fetcher that knows no pages.
    pub fn new(catalog: Arc<Catalog>, gateway: Arc<Gateway>, store: Arc<dyn MetricStore>) -> Self {
        let embedder = Arc::new(HashedBagOfWords::default());
        Engine {
            index: Arc::new(EventIndex::build(&catalog, embedder.as_ref())),
            recommender: Arc::new(CategoryAffinityRecommender::new(&catalog)),
            embedder,
            fetcher: Arc::new(StaticFetcher::new()),
            catalog,
            gateway,
            store,
            prompts: Arc::new(PromptSet::default()),
            config: EngineConfig::default(),
            in_flight: Mutex::new(HashSet::new()),
        }
    }

    pub fn with_fetcher(mut self, fetcher: Arc<dyn Fetcher>) -> Self {
        self.fetcher = fetcher;
        self
    }

    pub fn with_recommender(mut self, recommender: Arc<dyn Recommender>) -> Self {
        self.recommender = recommender;
        self
    }

    pub fn with_prompts(mut self, prompts: Arc<PromptSet>) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn with_config(mut self, config: EngineConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.index = Arc::new(EventIndex::build(&self.catalog, embedder.as_ref()));
        self.embedder = embedder;
        self
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn prompts(&self) -> &Arc<PromptSet> {
        &self.prompts
    }

    pub fn store(&self) -> &Arc<dyn MetricStore> {
        &self.store
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn new_session(&self, session_id: &str, language: &str) -> SessionState {
        SessionState::new(session_id, language, self.gateway.clock().now())
    }

    /// True while a turn for `session_id` is running.
    pub fn is_busy(&self, session_id: &str) -> bool {
        self.in_flight.lock().contains(session_id)
    }

    fn begin(&self, session_id: &str) -> Result<InFlight<'_>, TurnError> {
        if !self.in_flight.lock().insert(session_id.to_string()) {
            return Err(TurnError::ConcurrentTurn(session_id.to_string()));
        }
        Ok(InFlight { set: &self.in_flight, id: session_id.to_string() })
    }

    fn today(&self) -> String {
        self.gateway.clock().now().format("%A %Y-%m-%d %H:%M UTC").to_string()
    }

    fn visible_context(&self, state: &SessionState, budget: usize) -> String {
        let lines: Vec<String> = state
            .visible_cards
            .iter()
            .filter_map(|id| self.catalog.get(id))
            .map(|e| format!("- id {}: {}", e.id, summarize_event(e, budget).summary_text))
            .collect();
        if lines.is_empty() {
            "(none)".into()
        } else {
            lines.join("\n")
        }
    }

    fn history_context(&self, state: &SessionState, turns: usize) -> String {
        let cap = self.config.history_turn_tokens;
        let start = state.history.len().saturating_sub(turns);
        let mut lines = Vec::new();
        for t in &state.history[start..] {
            let user = match &t.input {
                UserInputEvent::TextMessage { text } => format!("User: {}", truncate_to_tokens(text, cap)),
                UserInputEvent::CaseSelected { choice } => format!("User pressed: {choice:?}"),
                UserInputEvent::WindowSet { window } => format!(
                    "User set the time window: {} to {}",
                    window.start.format("%Y-%m-%d"),
                    window.end.format("%Y-%m-%d")
                ),
                UserInputEvent::CardVisibility { .. } => continue,
            };
            lines.push(user);
            if !t.assistant_text.is_empty() {
                lines.push(format!("Assistant: {}", truncate_to_tokens(&t.assistant_text, cap)));
            }
        }
        if lines.is_empty() {
            "(none)".into()
        } else {
            lines.join("\n")
        }
    }

    fn detection_request(&self, state: &SessionState, text: &str) -> PromptRequest {
        let template = self.prompts.template(ACTION_DETECTION).expect("detection template present");
        let today = self.today();
        let start = state.time_window.start.format("%Y-%m-%d").to_string();
        let end = state.time_window.end.format("%Y-%m-%d").to_string();
        let case = match state.case_selection {
            Some(CaseSelection::SpecificSearch) => "specific search",
            Some(CaseSelection::GeneralRecommendation) => "general recommendations",
            None => "none",
        };
        let user = truncate_to_tokens(text, self.config.max_user_tokens);
        let mut turns = self.config.history_turns;
        let mut card_budget = self.config.card_context_tokens.max(SUMMARY_MIN_BUDGET);
        loop {
            let cards = self.visible_context(state, card_budget);
            let history = self.history_context(state, turns);
            let slots = [
                ("today", today.as_str()),
                ("window_start", start.as_str()),
                ("window_end", end.as_str()),
                ("case", case),
                ("visible_cards", cards.as_str()),
                ("history", history.as_str()),
            ];
            let messages = template.render(&slots, user, self.gateway.schemas()).expect("detection slots provided");
            let req = PromptRequest::new(Stage::ActionDetection, messages, self.config.detection_completion_tokens)
                .with_schema(schema::ACTION_DETECTION);
            if req.fits(self.gateway.limit()) || (turns == 0 && card_budget == SUMMARY_MIN_BUDGET) {
                return req;
            }
            if turns > 0 {
                turns -= 1;
            } else {
                card_budget = SUMMARY_MIN_BUDGET;
            }
        }
    }

    /// Classify one message. An unreadable detection reply becomes a
    /// Refusal; provider and budget errors are returned.
    pub fn detect_action(&self, state: &SessionState, text: &str, log: &CallLog) -> Result<Detection, GatewayError> {
        let req = self.detection_request(state, text);
        match self.gateway.complete(log, &req) {
            Ok(res) => Ok(detection_from(&res.parsed.expect("schema requests carry a parsed value"))),
            Err(GatewayError::Parse(e)) => Ok(Detection::refusal(format!("action detection unreadable ({e}); refused"))),
            Err(e) => Err(e),
        }
    }

    /// Run one turn. Returns the successor state; `state` itself is not
    /// changed. Only one turn per session may run at a time.
    pub fn take_turn(&self, state: &SessionState, event: UserInputEvent) -> Result<(SessionState, TurnResult), TurnError> {
        if let UserInputEvent::TextMessage { text } = &event {
            if text.trim().is_empty() {
                return Err(TurnError::InvalidInput("empty message".into()));
            }
        }
        if let UserInputEvent::WindowSet { window } = &event {
            if window.start > window.end {
                return Err(TurnError::InvalidInput("window end precedes start".into()));
            }
        }
        let _guard = self.begin(&state.session_id)?;
        let clock = self.gateway.clock().clone();
        let started = clock.now();
        let turn_id = state.next_turn_id();
        let log = CallLog::new(state.session_id.clone(), turn_id);
        let strings = self.prompts.strings(&state.language);
        let mut next = state.clone();
        let visible_before: Vec<VisibleCard> = state
            .visible_cards
            .iter()
            .map(|id| VisibleCard {
                event_id: id.clone(),
                title: self.catalog.get(id).map(|e| e.title.clone()).unwrap_or_default(),
            })
            .collect();

        let work = match &event {
            UserInputEvent::CaseSelected { choice } => {
                next.case_selection = Some(*choice);
                let mut w = TurnWork::new(ActionKind::Chat, TurnOutcome::Acknowledged);
                w.text = match choice {
                    CaseSelection::SpecificSearch => strings.ack_specific.clone(),
                    CaseSelection::GeneralRecommendation => strings.ack_general.clone(),
                };
                w
            }
            UserInputEvent::WindowSet { window } => {
                next.time_window = *window;
                next.window_source = WindowSource::ButtonSet;
                let mut w = TurnWork::new(ActionKind::Chat, TurnOutcome::Acknowledged);
                let start = window.start.format("%Y-%m-%d").to_string();
                let end = window.end.format("%Y-%m-%d").to_string();
                w.text = fill(&strings.ack_window, &[("start", &start), ("end", &end)]);
                w
            }
            UserInputEvent::CardVisibility { card_ids } => {
                let (updated, unknown) = record_visibility(&next, card_ids, &self.catalog);
                next = updated;
                let mut w = TurnWork::new(ActionKind::Chat, TurnOutcome::Acknowledged);
                w.text = strings.ack_visibility.clone();
                w.incidents.extend(unknown.into_iter().map(|id| format!("unknown card {id} ignored")));
                w
            }
            UserInputEvent::TextMessage { text } => self.handle_text(&mut next, text, &log),
        };

        let records = log.into_records();
        let metrics: Vec<_> = records.iter().map(|r| r.metric.clone()).collect();
        let wall = elapsed_ms(started, clock.now());
        let turn_metric = TurnMetric::from_prompts(&state.session_id, turn_id, wall, work.action, started, &metrics);
        let mut incidents = work.incidents;
        for rec in metrics.iter().cloned().map(MetricRecord::Prompt).chain([MetricRecord::Turn(turn_metric.clone())]) {
            if let Err(e) = self.store.append(&rec) {
                tracing::error!(error = %e, "metric store append failed");
                incidents.push(format!("metric store: {e}"));
            }
        }

        let slate_entries: Vec<SlateEntry> = work
            .slate
            .iter()
            .flat_map(|s| &s.cards)
            .map(|c| SlateEntry {
                event_id: c.event_id.clone(),
                title: c.title.clone(),
                start_time: c.start_time,
                end_time: c.end_time,
                city_area: c.city_area.clone(),
            })
            .collect();
        if let Some(s) = &work.slate {
            next.last_slate = s.ids();
        }
        next.history.push(Turn {
            turn_id,
            input: event.clone(),
            action: work.action,
            assistant_text: work.text.clone(),
            slate_ids: slate_entries.iter().map(|s| s.event_id.clone()).collect(),
        });

        let turn_log = TurnLog {
            session_id: state.session_id.clone(),
            turn_id,
            timestamp: started,
            input: event,
            action: work.action,
            outcome: work.outcome,
            visible_cards: visible_before,
            stated_window: work.stated_window,
            stated_location: work.stated_location,
            applied_window: next.time_window,
            window_source: next.window_source,
            query: work.query,
            candidate_ids: work.candidate_ids,
            verdicts: work.verdicts,
            slate: slate_entries,
            target_event_id: work.target,
            clarify_candidates: work.clarify,
            assistant_text: work.text.clone(),
            incidents,
            metric: turn_metric.clone(),
            prompts: records.into_iter().map(|r| r.exchange).collect(),
        };
        let result = TurnResult {
            turn_id,
            assistant_text: work.text,
            slate: work.slate,
            action_taken: work.action,
            turn_metrics: metrics,
            extracted_window: turn_log.stated_window,
            turn_metric,
            log: turn_log,
        };
        Ok((next, result))
    }

    fn fail(&self, w: &mut TurnWork, language: &str, error: impl std::fmt::Display) {
        tracing::error!(error = %error, "turn failed");
        w.outcome = TurnOutcome::Failed;
        w.text = self.prompts.strings(language).failure.clone();
        w.incidents.push(format!("turn failed: {error}"));
    }

    fn handle_text(&self, next: &mut SessionState, text: &str, log: &CallLog) -> TurnWork {
        let detection = match self.detect_action(next, text, log) {
            Ok(d) => d,
            Err(e) => {
                let mut w = TurnWork::new(ActionKind::Chat, TurnOutcome::Failed);
                self.fail(&mut w, &next.language, e);
                return w;
            }
        };
        let kind = detection.action.kind;
        let mut w = TurnWork::new(kind, TurnOutcome::Answered);
        w.incidents.extend(detection.incidents.iter().cloned());

        if let Some(window) = detection.time_window {
            w.stated_window = Some(window);
            if next.window_source == WindowSource::ButtonSet {
                w.incidents.push("chat-stated window not applied: the button-set window takes precedence".into());
            } else {
                next.time_window = window;
                next.window_source = WindowSource::ChatExtracted;
            }
        }
        if let Some(loc) = &detection.location {
            w.stated_location = Some(loc.clone());
            next.stated_location = Some(loc.clone());
        }

        match kind {
            ActionKind::Chat => {
                w.outcome = TurnOutcome::Replied;
                w.text = detection
                    .action
                    .inline_reply
                    .clone()
                    .unwrap_or_else(|| self.prompts.strings(&next.language).chat_fallback.clone());
            }
            ActionKind::Refusal => {
                w.outcome = TurnOutcome::Refused;
                w.text = refusal_response(&self.prompts, &next.language).to_string();
            }
            ActionKind::Search | ActionKind::Recommendation => self.retrieve(next, text, &detection, log, &mut w),
            ActionKind::TargetedInquiry => self.inquire(next, text, &detection, log, &mut w),
        }
        w
    }

    fn retrieve(&self, next: &mut SessionState, text: &str, det: &Detection, log: &CallLog, w: &mut TurnWork) {
        let rc = &self.config.retrieval;
        let mut query = Query::new(text, next.time_window, &next.language);
        query.add_keywords(det.keywords.iter().map(String::as_str));
        if let Some(loc) = &next.stated_location {
            query.add_keywords([loc.as_str()]);
        }
        let search = w.action == ActionKind::Search;
        let (stage, template_id, schema_id) = if search {
            (Stage::Search, SEARCH_QUERY, schema::SEARCH_QUERY)
        } else {
            (Stage::Recommender, RECOMMENDER_QUERY, schema::RECOMMENDER_QUERY)
        };
        let today = self.today();
        let messages = self
            .prompts
            .template(template_id)
            .and_then(|t| {
                t.render(&[("today", today.as_str())], truncate_to_tokens(text, self.config.max_user_tokens), self.gateway.schemas())
            })
            .expect("query template slots provided");
        let req = PromptRequest::new(stage, messages, self.config.query_completion_tokens).with_schema(schema_id);
        match self.gateway.complete(log, &req) {
            Ok(res) => query.apply_structured(res.parsed.as_ref().expect("schema requests carry a parsed value")),
            Err(GatewayError::Parse(e)) => w.incidents.push(format!("query extraction unreadable ({e}); raw text used")),
            Err(e) => return self.fail(w, &next.language, e),
        }

        let candidates = if search {
            build_search_candidates(&query, &self.catalog, &self.index, self.embedder.as_ref(), rc.candidate_max)
        } else {
            build_recommendation_candidates(next, &query, &self.catalog, self.recommender.as_ref(), rc.candidate_max)
        };
        w.candidate_ids = candidates.ids();
        w.query = Some(query.clone());
        if !candidates.is_empty() {
            match reduce_candidates(&query, &candidates, &self.catalog, &self.gateway, &self.prompts, log, rc) {
                Ok(r) => {
                    w.verdicts = r.verdicts;
                    w.incidents.extend(r.incidents);
                }
                Err(e) => return self.fail(w, &next.language, e),
            }
        }
        let answer =
            compose_answer(&query, &w.verdicts, &candidates, &self.catalog, &self.gateway, &self.prompts, log, rc);
        w.incidents.extend(answer.incidents);
        w.outcome = if answer.empty { TurnOutcome::EmptyResult } else { TurnOutcome::Answered };
        w.text = answer.text;
        w.slate = answer.slate;
    }

    fn inquire(&self, next: &mut SessionState, text: &str, det: &Detection, log: &CallLog, w: &mut TurnWork) {
        match resolve_target(next, text, det.target_event_id.as_deref(), &self.catalog) {
            Resolution::Target(id) => {
                let event = self.catalog.get(&id).expect("resolved targets exist");
                w.target = Some(id);
                let (dossier, incidents) =
                    build_event_dossier(event, self.fetcher.as_ref(), self.config.dossier_budget, &mut next.page_cache);
                w.incidents.extend(incidents);
                match answer_inquiry(
                    text,
                    &dossier,
                    &self.gateway,
                    &self.prompts,
                    log,
                    &next.language,
                    self.config.max_user_tokens,
                ) {
                    Ok(answer) => {
                        w.outcome = TurnOutcome::Answered;
                        w.text = answer;
                    }
                    Err(e) => self.fail(w, &next.language, e),
                }
            }
            Resolution::Clarify(ids) => {
                let strings = self.prompts.strings(&next.language);
                w.outcome = TurnOutcome::Clarify;
                w.text = if ids.is_empty() {
                    strings.clarify_none.clone()
                } else {
                    let options: Vec<String> = ids
                        .iter()
                        .enumerate()
                        .filter_map(|(i, id)| self.catalog.get(id).map(|e| format!("{}. {}", i + 1, e.title)))
                        .collect();
                    fill(&strings.clarify, &[("options", &options.join("; "))])
                };
                w.clarify = ids;
            }
        }
    }
}
