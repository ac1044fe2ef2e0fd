use std::collections::HashMap;
use std::sync::{Arc, LazyLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crs_core::catalog::TimeWindow;
use crs_core::dialog::{
    greeting, record_visibility, ActionKind, CaseSelection, Engine, Greeting, SessionState, TurnError,
    UserInputEvent, WindowSource,
};
use crs_core::resque::{validate_response, SurveyResponse};
use crs_core::retrieval::SlateCard;
use crs_core::telemetry::{
    aggregate, classify_failures, export_logs, FailureTag, LogFormat, PromptMetric, ReportFilter, TurnLog,
    TurnOutcome,
};

use crate::journal::{Journal, JournalEntry, JournalError, RestoredSession};

#[derive(Debug)]
struct SessionEntry {
    state: SessionState,
    logs: Vec<TurnLog>,
    surveys: Vec<SurveyResponse>,
    busy: bool,
    visibility_rev: u64,
}

struct Inner {
    engine: Arc<Engine>,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionEntry>>>>,
    journal: Option<Journal>,
    operator_token: String,
    default_language: String,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, journal: Option<Journal>, operator_token: impl Into<String>) -> Self {
        AppState {
            inner: Arc::new(Inner {
                engine,
                sessions: RwLock::new(HashMap::new()),
                journal,
                operator_token: operator_token.into(),
                default_language: "en".into(),
            }),
        }
    }

    /// Reload every journaled session.
    pub fn restore(engine: Arc<Engine>, journal: Journal, operator_token: impl Into<String>) -> Result<Self, JournalError> {
        let restored = journal.restore_all()?;
        let app = Self::new(engine, Some(journal), operator_token);
        {
            let mut sessions = app.inner.sessions.write();
            for (id, RestoredSession { state, logs, surveys }) in restored {
                let entry = SessionEntry { state, logs, surveys, busy: false, visibility_rev: 0 };
                sessions.insert(id, Arc::new(Mutex::new(entry)));
            }
        }
        Ok(app)
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.inner.engine
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.read().len()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<SessionEntry>>, ApiError> {
        self.inner.sessions.read().get(id).cloned().ok_or_else(|| ApiError::NotFound(format!("no session {id}")))
    }

    fn journal(&self, session_id: &str, entry: JournalEntry) {
        if let Some(j) = &self.inner.journal {
            if let Err(e) = j.append(session_id, &entry) {
                tracing::error!(session = session_id, error = %e, "journal append failed");
            }
        }
    }

    fn authorize(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        let bearer = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        let direct = headers.get("x-operator-token").and_then(|v| v.to_str().ok());
        match bearer.or(direct) {
            Some(t) if !self.inner.operator_token.is_empty() && t == self.inner.operator_token => Ok(()),
            _ => Err(ApiError::Unauthorized),
        }
    }
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    Unauthorized,
    NotFound(String),
    Conflict(String),
    Unprocessable(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, msg) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            ApiError::Unauthorized => (StatusCode::UNAUTHORIZED, "operator token required".to_string()),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": msg }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::Unprocessable(r.body_text())
    }
}

static LANGUAGE_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z]{2,3}(-[A-Za-z0-9]{1,8})*$").expect("valid regex"));

/// 128 random bits as lowercase hex.
pub fn new_session_id() -> String {
    format!("{:032x}", rand::rng().random::<u128>())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/turns", post(post_turn))
        .route("/v1/sessions/{id}/visibility", post(post_visibility))
        .route("/v1/sessions/{id}/window", put(put_window))
        .route("/v1/sessions/{id}/survey", post(post_survey))
        .route("/v1/sessions/{id}/log", get(get_log))
        .route("/v1/events/{id}", get(get_event))
        .route("/v1/metrics/report", get(get_report))
        .with_state(state)
}

#[derive(Debug, Default, Deserialize)]
struct CreateSession {
    language: Option<String>,
}

#[derive(Debug, Serialize)]
struct SessionView {
    session_id: String,
    language: String,
    time_window: TimeWindow,
    window_source: WindowSource,
    case_selection: Option<CaseSelection>,
    visible_cards: Vec<String>,
    turn_count: usize,
}

impl SessionView {
    fn of(s: &SessionState) -> Self {
        SessionView {
            session_id: s.session_id.clone(),
            language: s.language.clone(),
            time_window: s.time_window,
            window_source: s.window_source,
            case_selection: s.case_selection,
            visible_cards: s.visible_cards.clone(),
            turn_count: s.turn_count(),
        }
    }
}

#[derive(Debug, Serialize)]
struct Created {
    #[serde(flatten)]
    session: SessionView,
    greeting: Greeting,
}

async fn create_session(
    State(app): State<AppState>,
    body: Option<Json<CreateSession>>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let language = req.language.unwrap_or_else(|| app.inner.default_language.clone());
    if !LANGUAGE_TAG.is_match(&language) {
        return Err(ApiError::BadRequest(format!("`{language}` is not a language tag")));
    }
    let id = new_session_id();
    let state = app.engine().new_session(&id, &language);
    let greeting = greeting(app.engine().prompts(), &language);
    app.journal(&id, JournalEntry::Created { state: state.clone() });
    let view = SessionView::of(&state);
    let entry = SessionEntry { state, logs: Vec::new(), surveys: Vec::new(), busy: false, visibility_rev: 0 };
    app.inner.sessions.write().insert(id, Arc::new(Mutex::new(entry)));
    Ok((StatusCode::CREATED, Json(Created { session: view, greeting })))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let entry = app.session(&id)?;
    let view = SessionView::of(&entry.lock().state);
    Ok(Json(serde_json::to_value(view).expect("view serializes")))
}

#[derive(Debug, Serialize)]
pub struct TurnResponse {
    pub turn_id: u64,
    pub assistant_text: String,
    pub slate: Vec<SlateCard>,
    pub action_taken: ActionKind,
    pub outcome: TurnOutcome,
    pub turn_metrics: Vec<PromptMetric>,
    pub extracted_window: Option<TimeWindow>,
    pub time_window: TimeWindow,
}

/// Run one turn with the session marked busy. A visibility report that
/// arrives meanwhile is kept over the turn's copy of the visible cards.
async fn run_turn(app: &AppState, id: &str, event: UserInputEvent) -> Result<TurnResponse, ApiError> {
    let entry = app.session(id)?;
    let (state, rev) = {
        let mut e = entry.lock();
        if e.busy {
            return Err(ApiError::Conflict("a turn is already in progress for this session".into()));
        }
        e.busy = true;
        (e.state.clone(), e.visibility_rev)
    };
    let engine = app.engine().clone();
    let outcome = tokio::task::spawn_blocking(move || engine.take_turn(&state, event)).await;
    let mut e = entry.lock();
    e.busy = false;
    let (mut next, result) = match outcome {
        Ok(Ok(r)) => r,
        Ok(Err(TurnError::ConcurrentTurn(m))) => return Err(ApiError::Conflict(format!("turn in progress for {m}"))),
        Ok(Err(TurnError::InvalidInput(m))) => return Err(ApiError::Unprocessable(m)),
        Err(join) => return Err(ApiError::Internal(format!("turn aborted: {join}"))),
    };
    if e.visibility_rev != rev {
        next.visible_cards = e.state.visible_cards.clone();
    }
    app.journal(id, JournalEntry::Turn { log: Box::new(result.log.clone()), state: next.clone() });
    let response = TurnResponse {
        turn_id: result.turn_id,
        assistant_text: result.assistant_text,
        slate: result.slate.map(|s| s.cards).unwrap_or_default(),
        action_taken: result.action_taken,
        outcome: result.log.outcome,
        turn_metrics: result.turn_metrics,
        extracted_window: result.extracted_window,
        time_window: next.time_window,
    };
    e.logs.push(result.log);
    e.state = next;
    Ok(response)
}

async fn post_turn(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<UserInputEvent>, JsonRejection>,
) -> Result<Json<TurnResponse>, ApiError> {
    app.session(&id)?;
    let Json(event) = body?;
    Ok(Json(run_turn(&app, &id, event).await?))
}

#[derive(Debug, Deserialize)]
struct VisibilityReport {
    card_ids: Vec<String>,
}

async fn post_visibility(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<VisibilityReport>, JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    let entry = app.session(&id)?;
    let Json(report) = body?;
    let mut e = entry.lock();
    let (next, unknown) = record_visibility(&e.state, &report.card_ids, &app.engine().catalog());
    e.state = next;
    e.visibility_rev += 1;
    app.journal(&id, JournalEntry::Visibility { state: e.state.clone() });
    Ok(Json(json!({ "visible_cards": e.state.visible_cards, "ignored": unknown })))
}

async fn put_window(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<TimeWindow>, JsonRejection>,
) -> Result<Json<TurnResponse>, ApiError> {
    app.session(&id)?;
    let Json(window) = body?;
    Ok(Json(run_turn(&app, &id, UserInputEvent::WindowSet { window }).await?))
}

async fn get_event(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let event = app.engine().catalog().get(&id).ok_or_else(|| ApiError::NotFound(format!("no event {id}")))?;
    Ok(Json(serde_json::to_value(event).expect("events serialize")))
}

#[derive(Debug, Serialize)]
struct SurveyAccepted {
    response_id: String,
    failure_tags: Vec<FailureTag>,
}

async fn post_survey(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<(StatusCode, Json<SurveyAccepted>), ApiError> {
    let entry = app.session(&id)?;
    let Json(mut raw) = body?;
    let Some(obj) = raw.as_object_mut() else {
        return Err(ApiError::Unprocessable("expected a JSON object".into()));
    };
    match obj.get("session_id").and_then(Value::as_str) {
        Some(s) if s != id => return Err(ApiError::Unprocessable("session_id does not match the path".into())),
        Some(_) => {}
        None => {
            obj.insert("session_id".into(), Value::String(id.clone()));
        }
    }
    let has_id = obj.get("response_id").and_then(Value::as_str).is_some_and(|s| !s.trim().is_empty());
    if !has_id {
        obj.insert("response_id".into(), Value::String(new_session_id()));
    }
    let mut e = entry.lock();
    if e.state.turn_count() == 0 {
        return Err(ApiError::Conflict("the session has no interaction".into()));
    }
    if !e.surveys.is_empty() {
        return Err(ApiError::Conflict("a survey was already submitted for this session".into()));
    }
    let response = validate_response(&raw).map_err(|err| ApiError::Unprocessable(err.to_string()))?;
    let failure_tags = classify_failures(&e.logs, response.success);
    app.journal(&id, JournalEntry::Survey { response: response.clone(), failure_tags: failure_tags.clone() });
    let accepted = SurveyAccepted { response_id: response.response_id.clone(), failure_tags };
    e.surveys.push(response);
    Ok((StatusCode::CREATED, Json(accepted)))
}

#[derive(Debug, Default, Deserialize)]
struct ReportQuery {
    since: Option<DateTime<Utc>>,
    until: Option<DateTime<Utc>>,
    format: Option<String>,
}

async fn get_report(
    State(app): State<AppState>,
    headers: HeaderMap,
    query: Result<Query<ReportQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, ApiError> {
    app.authorize(&headers)?;
    let Query(q) = query.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let records = app.engine().store().snapshot().map_err(|e| ApiError::Internal(e.to_string()))?;
    let report = aggregate(&records, &ReportFilter { since: q.since, until: q.until, sessions: None });
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(report).into_response()),
        Some("text") => Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], report.to_text_table()).into_response()),
        Some(other) => Err(ApiError::BadRequest(format!("unknown format `{other}`"))),
    }
}

#[derive(Debug, Default, Deserialize)]
struct LogQuery {
    format: Option<LogFormat>,
    #[serde(default)]
    redact: bool,
}

async fn get_log(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    query: Result<Query<LogQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Response, ApiError> {
    app.authorize(&headers)?;
    let Query(q) = query.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let entry = app.session(&id)?;
    let logs = entry.lock().logs.clone();
    let format = q.format.unwrap_or(LogFormat::Json);
    let content_type = match format {
        LogFormat::Json => "application/json",
        LogFormat::Jsonl => "application/x-ndjson",
    };
    Ok(([(header::CONTENT_TYPE, content_type)], export_logs(&logs, format, q.redact)).into_response())
}
