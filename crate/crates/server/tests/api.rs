use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use chrono::{Duration, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use crs_server::{build_app, build_engine, router, AppState, Journal, ServerConfig};

const TOKEN: &str = "op-secret";

fn write_fixtures(dir: &Path, latency_ms: u64) -> ServerConfig {
    let now = Utc::now();
    let events: Vec<String> = [
        ("e1", "Jazz Night", "Concert", 1),
        ("e2", "Jazz Brunch", "Concert", 2),
        ("e3", "Techno Rave", "Party", 3),
        ("e4", "Comedy Open Mic", "StandUpComedy", 4),
        ("e5", "Jazz Picnic", "Concert", 5),
    ]
    .iter()
    .map(|(id, title, cat, d)| {
        json!({"id": id, "title": title, "category": cat, "start_time": (now + Duration::days(*d)).to_rfc3339(),
               "price": "20", "language": "en", "description": format!("{title} in town.")})
        .to_string()
    })
    .collect();
    std::fs::write(dir.join("catalog.jsonl"), events.join("\n")).unwrap();
    let script = format!(
        r#"{{"stage_label": "ActionDetection", "match": "jazz", "response": {{"action": "Search", "keywords": ["jazz"]}}, "injected_latency_ms": {latency_ms}}}
{{"stage_label": "ActionDetection", "match": "", "response": {{"action": "Chat", "reply": "Hello!"}}, "injected_latency_ms": {latency_ms}}}
{{"stage_label": "Search", "match": "", "response": {{"query": "jazz", "keywords": ["jazz"]}}}}
{{"stage_label": "Reduction", "match": "", "response": {{"$reduce_contains": "jazz"}}}}
{{"stage_label": "AnswerCreation", "match": "", "response": "Some jazz for you."}}"#
    );
    std::fs::write(dir.join("script.jsonl"), script).unwrap();
    let mut cfg = ServerConfig::from_toml(&format!(
        "catalog = \"catalog.jsonl\"\nmock_script = \"script.jsonl\"\noperator_token = \"{TOKEN}\"\n"
    ))
    .unwrap();
    cfg.resolve_paths(dir);
    cfg.validate().unwrap();
    cfg
}

fn app(latency_ms: u64) -> (tempfile::TempDir, Router) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_fixtures(dir.path(), latency_ms);
    let state = AppState::new(Arc::new(build_engine(&cfg).unwrap()), None, TOKEN);
    (dir, router(state))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let value = serde_json::from_str(&text).unwrap_or(Value::String(text));
    (status, value)
}

async fn session(app: &Router) -> String {
    let (status, body) = call(app, Method::POST, "/v1/sessions", Some(json!({"language": "en"})), None).await;
    assert_eq!(status, StatusCode::CREATED);
    body["session_id"].as_str().unwrap().to_string()
}

fn text(t: &str) -> Value {
    json!({"type": "text_message", "text": t})
}

#[tokio::test]
async fn create_session_returns_greeting_and_buttons() {
    let (_d, app) = app(0);
    let (status, body) = call(&app, Method::POST, "/v1/sessions", Some(json!({"language": "de-CH"})), None).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = body["session_id"].as_str().unwrap();
    assert_eq!(id.len(), 32);
    assert!(id.chars().all(|c| c.is_ascii_hexdigit()));
    assert_eq!(body["greeting"]["buttons"].as_array().unwrap().len(), 2);
    assert_eq!(body["greeting"]["buttons"][0]["event"]["type"], "case_selected");
    assert!(body["greeting"]["text"].as_str().unwrap().contains("Sprachmodell"));

    let (status, _) = call(&app, Method::POST, "/v1/sessions", Some(json!({"language": "not a tag!"})), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, Method::POST, "/v1/sessions", None, None).await;
    assert_eq!(status, StatusCode::CREATED);
}

#[tokio::test]
async fn turn_errors() {
    let (_d, app) = app(0);
    let (status, _) = call(&app, Method::POST, "/v1/sessions/nope/turns", Some(text("hi")), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let id = session(&app).await;
    let uri = format!("/v1/sessions/{id}/turns");
    let (status, _) = call(&app, Method::POST, &uri, Some(json!({"type": "dance"})), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, Method::POST, &uri, Some(text("  ")), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn search_turn_returns_a_slate() {
    let (_d, app) = app(0);
    let id = session(&app).await;
    let (status, body) = call(&app, Method::POST, &format!("/v1/sessions/{id}/turns"), Some(text("jazz?")), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["action_taken"], "Search");
    let ids: Vec<&str> = body["slate"].as_array().unwrap().iter().map(|c| c["event_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["e1", "e2", "e5"]);
    assert_eq!(body["slate"][0]["detail_link"], "/v1/events/e1");
    assert_eq!(body["turn_metrics"].as_array().unwrap().len(), 4);

    let (status, ev) = call(&app, Method::GET, "/v1/events/e1", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ev["title"], "Jazz Night");
    let (status, _) = call(&app, Method::GET, "/v1/events/zzz", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_turn_conflicts() {
    let (_d, app) = app(400);
    let id = session(&app).await;
    let uri = format!("/v1/sessions/{id}/turns");
    let (a, b) = tokio::join!(
        call(&app, Method::POST, &uri, Some(text("hello")), None),
        call(&app, Method::POST, &uri, Some(text("hello again")), None)
    );
    let mut statuses = [a.0, b.0];
    statuses.sort();
    assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT]);
    let (status, _) = call(&app, Method::POST, &uri, Some(text("third")), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn visibility_is_out_of_band() {
    let (_d, app) = app(0);
    let id = session(&app).await;
    let (status, body) = call(
        &app,
        Method::POST,
        &format!("/v1/sessions/{id}/visibility"),
        Some(json!({"card_ids": ["e1", "e2", "e3", "e4", "ghost"]})),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["visible_cards"], json!(["e2", "e3", "e4"]));
    assert_eq!(body["ignored"], json!(["ghost"]));
    let (_, s) = call(&app, Method::GET, &format!("/v1/sessions/{id}"), None, None).await;
    assert_eq!(s["turn_count"], 0);

    call(&app, Method::POST, &format!("/v1/sessions/{id}/turns"), Some(text("hello")), None).await;
    let (status, log) = call(&app, Method::GET, &format!("/v1/sessions/{id}/log"), None, Some(TOKEN)).await;
    assert_eq!(status, StatusCode::OK);
    let cards: Vec<&str> =
        log[0]["visible_cards"].as_array().unwrap().iter().map(|c| c["event_id"].as_str().unwrap()).collect();
    assert_eq!(cards, ["e2", "e3", "e4"]);
}

#[tokio::test]
async fn window_control() {
    let (_d, app) = app(0);
    let id = session(&app).await;
    let uri = format!("/v1/sessions/{id}/window");
    let start = Utc::now();
    let w = json!({"start": start.to_rfc3339(), "end": (start + Duration::days(2) + Duration::hours(1)).to_rfc3339()});
    let (status, body) = call(&app, Method::PUT, &uri, Some(w.clone()), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["outcome"], "Acknowledged");
    let (_, s) = call(&app, Method::GET, &format!("/v1/sessions/{id}"), None, None).await;
    assert_eq!(s["window_source"], "ButtonSet");

    let (_, body) = call(&app, Method::POST, &format!("/v1/sessions/{id}/turns"), Some(text("jazz")), None).await;
    let ids: Vec<&str> = body["slate"].as_array().unwrap().iter().map(|c| c["event_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["e1", "e2"]);

    let bad = json!({"start": w["end"], "end": w["start"]});
    let (status, _) = call(&app, Method::PUT, &uri, Some(bad), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

fn survey(success: bool) -> Value {
    let items: serde_json::Map<String, Value> = [
        "RecommendationAccuracy",
        "InterfaceAdequacy",
        "Consistency",
        "Coherence",
        "InputProcessingPerformance",
        "Control",
        "PerceivedUsefulness",
        "Confidence",
        "OverallSatisfaction",
        "FutureUse",
    ]
    .iter()
    .map(|k| (k.to_string(), json!(4)))
    .collect();
    let mut v = json!({"items": items, "success": success});
    if success {
        v["perceived_effort"] = json!(2);
    } else {
        v["general_problems"] = json!("slow");
    }
    v
}

#[tokio::test]
async fn survey_rules() {
    let (_d, app) = app(0);
    let id = session(&app).await;
    let uri = format!("/v1/sessions/{id}/survey");
    let (status, _) = call(&app, Method::POST, &uri, Some(survey(true)), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    call(&app, Method::POST, &format!("/v1/sessions/{id}/turns"), Some(text("hello")), None).await;
    let mut bad = survey(true);
    bad["items"]["Control"] = json!(9);
    let (status, _) = call(&app, Method::POST, &uri, Some(bad), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, Method::POST, &uri, Some(json!({"items": {}})), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, body) = call(&app, Method::POST, &uri, Some(survey(false)), None).await;
    assert_eq!(status, StatusCode::CREATED);
    assert!(body["response_id"].as_str().is_some());
    assert_eq!(body["failure_tags"], json!([]));
    let (status, _) = call(&app, Method::POST, &uri, Some(survey(false)), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, Method::POST, "/v1/sessions/nope/survey", Some(survey(true)), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn operator_endpoints_need_the_token() {
    let (_d, app) = app(0);
    let id = session(&app).await;
    call(&app, Method::POST, &format!("/v1/sessions/{id}/turns"), Some(text("jazz")), None).await;

    for uri in ["/v1/metrics/report".to_string(), format!("/v1/sessions/{id}/log")] {
        let (status, _) = call(&app, Method::GET, &uri, None, None).await;
        assert_eq!(status, StatusCode::UNAUTHORIZED);
        let (status, _) = call(&app, Method::GET, &uri, None, Some("wrong")).await;
        assert_eq!(status, StatusCode::UNAUTHORIZED);
    }
    let (status, report) = call(&app, Method::GET, "/v1/metrics/report", None, Some(TOKEN)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["prompt_count"], 4);
    let (status, table) = call(&app, Method::GET, "/v1/metrics/report?format=text", None, Some(TOKEN)).await;
    assert_eq!(status, StatusCode::OK);
    assert!(table.as_str().unwrap().contains("Reduction"));

    let (status, red) = call(&app, Method::GET, &format!("/v1/sessions/{id}/log?redact=true"), None, Some(TOKEN)).await;
    assert_eq!(status, StatusCode::OK);
    assert!(red[0]["prompts"][0]["output"].as_str().unwrap().starts_with("sha256:"));
    let (status, _) = call(&app, Method::GET, "/v1/sessions/nope/log", None, Some(TOKEN)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = write_fixtures(dir.path(), 0);
    cfg.data_dir = Some(dir.path().join("data"));

    let first = router(build_app(&cfg).unwrap());
    let id = session(&first).await;
    call(&first, Method::POST, &format!("/v1/sessions/{id}/visibility"), Some(json!({"card_ids": ["e1"]})), None).await;
    call(&first, Method::POST, &format!("/v1/sessions/{id}/turns"), Some(text("jazz")), None).await;
    call(&first, Method::POST, &format!("/v1/sessions/{id}/turns"), Some(text("hello")), None).await;
    let log_uri = format!("/v1/sessions/{id}/log?format=jsonl");
    let (_, before) = call(&first, Method::GET, &log_uri, None, Some(TOKEN)).await;
    let (_, report_before) = call(&first, Method::GET, "/v1/metrics/report", None, Some(TOKEN)).await;
    drop(first);

    let second = router(build_app(&cfg).unwrap());
    let (_, after) = call(&second, Method::GET, &log_uri, None, Some(TOKEN)).await;
    assert_eq!(before, after);
    let (_, report_after) = call(&second, Method::GET, "/v1/metrics/report", None, Some(TOKEN)).await;
    assert_eq!(report_before, report_after);
    let (_, s) = call(&second, Method::GET, &format!("/v1/sessions/{id}"), None, None).await;
    assert_eq!(s["turn_count"], 2);
    assert_eq!(s["visible_cards"], json!(["e1"]));
    let (status, _) = call(&second, Method::POST, &format!("/v1/sessions/{id}/survey"), Some(survey(true)), None).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(Journal::open(dir.path().join("data/sessions")).unwrap().restore_all().unwrap()[&id].surveys.len(), 1);
}
