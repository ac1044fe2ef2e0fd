//! Generated fixtures: random catalogs, metric stores shaped like the
//! published report tables, and a survey sample with known proportions.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crs_core::catalog::{ingest_catalog, Catalog, CategoryMap};
use crs_core::dialog::ActionKind;
use crs_core::gateway::{cost_of, Stage, TokenUsage};
use crs_core::resque::{Construct, SurveyResponse};
use crs_core::telemetry::{MetricRecord, PromptMetric, TurnMetric};
use crs_core::UsdRate;

const CATEGORIES: [&str; 8] =
    ["Concert", "Party", "Theater", "StandUpComedy", "Market", "Exhibition", "Sports", "Workshop"];
const ADJECTIVES: [&str; 10] = ["Open", "Late", "Grand", "Little", "Urban", "Silent", "Summer", "Winter", "Wild", "Blue"];
const NOUNS: [&str; 10] = ["Jazz", "Techno", "Salsa", "Poetry", "Market", "Cinema", "Circus", "Choir", "Ballet", "Brunch"];
const AREAS: [&str; 6] = ["Kreis 1", "Kreis 3", "Kreis 4", "Kreis 5", "Oerlikon", "Altstetten"];
const FILLER: [&str; 16] = [
    "music", "evening", "friends", "stage", "local", "artists", "drinks", "dance", "tickets", "doors", "guests",
    "venue", "lights", "night", "sound", "crowd",
];

/// Shape of a generated catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogSpec {
    pub events: usize,
    /// Words per description.
    pub description_words: usize,
    /// Start times fall within this many days after `now`.
    pub horizon_days: i64,
}

impl Default for CatalogSpec {
    fn default() -> Self {
        CatalogSpec { events: 100, description_words: 40, horizon_days: 60 }
    }
}

/// Raw records, ids `ev0000`, `ev0001`, ...
pub fn synthetic_records(spec: &CatalogSpec, now: DateTime<Utc>, seed: u64) -> Vec<Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.events)
        .map(|i| {
            let title = format!("{} {}", ADJECTIVES.choose(&mut rng).unwrap(), NOUNS.choose(&mut rng).unwrap());
            let words: Vec<&str> = (0..spec.description_words).map(|_| *FILLER.choose(&mut rng).unwrap()).collect();
            let start = now + Duration::minutes(rng.random_range(60..spec.horizon_days.max(1) * 24 * 60));
            json!({
                "id": format!("ev{i:04}"),
                "title": title,
                "category": CATEGORIES.choose(&mut rng).unwrap(),
                "start_time": start.to_rfc3339(),
                "city_area": AREAS.choose(&mut rng).unwrap(),
                "price": rng.random_range(0..80).to_string(),
                "language": "en",
                "description": format!("{title}. {}.", words.join(" ")),
            })
        })
        .collect()
}

pub fn synthetic_catalog(spec: &CatalogSpec, now: DateTime<Utc>, seed: u64) -> Catalog {
    ingest_catalog(synthetic_records(spec, now, seed), &CategoryMap::default()).0
}

fn prompt(session: &str, turn: u64, stage: Stage, tokens: usize, latency_ms: u64, at: DateTime<Utc>) -> PromptMetric {
    let usage = TokenUsage::new(tokens - tokens / 10, tokens / 10);
    PromptMetric {
        session_id: session.into(),
        turn_id: turn,
        stage,
        cost_usd: cost_of(&usage, &UsdRate::default()),
        usage,
        latency_ms,
        timestamp: at,
    }
}

fn push_turn(out: &mut Vec<MetricRecord>, prompts: Vec<PromptMetric>, wall_ms: u64, action: ActionKind) {
    let p0 = &prompts[0];
    let turn = TurnMetric::from_prompts(&p0.session_id, p0.turn_id, wall_ms, action, p0.timestamp, &prompts);
    out.extend(prompts.into_iter().map(MetricRecord::Prompt));
    out.push(MetricRecord::Turn(turn));
}

/// Per-stage medians: (stage, tokens per message, latency ms per message).
pub const STAGE_MEDIANS: [(Stage, usize, u64); 6] = [
    (Stage::ActionDetection, 2622, 2700),
    (Stage::TargetedInquiry, 852, 600),
    (Stage::Search, 1724, 1600),
    (Stage::Recommender, 796, 1200),
    (Stage::Reduction, 23408, 4000),
    (Stage::AnswerCreation, 2419, 2600),
];

/// Three messages per stage around the given medians. Reduction messages
/// split their tokens and latency over three batch calls, so the stage
/// value is a per-message sum.
pub fn stage_median_records(t0: DateTime<Utc>) -> Vec<MetricRecord> {
    let mut out = Vec::new();
    for (si, (stage, tokens, ms)) in STAGE_MEDIANS.into_iter().enumerate() {
        let session = format!("stage-{si}");
        for (turn, (dt, dl)) in [(-300i64, -200i64), (0, 0), (450, 350)].into_iter().enumerate() {
            let tok = (tokens as i64 + dt) as usize;
            let lat = (ms as i64 + dl) as u64;
            let at = t0 + Duration::minutes((si * 10 + turn) as i64);
            let turn = turn as u64 + 1;
            let prompts = if stage == Stage::Reduction {
                let a = tok / 3;
                let b = tok / 3;
                let la = lat / 3;
                vec![
                    prompt(&session, turn, stage, a, la, at),
                    prompt(&session, turn, stage, b, la, at),
                    prompt(&session, turn, stage, tok - a - b, lat - 2 * la, at),
                ]
            } else {
                vec![prompt(&session, turn, stage, tok, lat, at)]
            };
            let wall: u64 = prompts.iter().map(|p| p.latency_ms).sum();
            push_turn(&mut out, prompts, wall, ActionKind::Search);
        }
    }
    out
}

/// Three sessions whose message and session medians are 18106 tokens /
/// 5.7 s and 56325 tokens / 13.7 s.
pub fn message_median_records(t0: DateTime<Utc>) -> Vec<MetricRecord> {
    let sessions: [(&str, &[(usize, u64)]); 3] = [
        ("low", &[(10000, 5700), (18106, 3000)]),
        ("mid", &[(18106, 5700), (18106, 4000), (20113, 4000)]),
        ("high", &[(30000, 8000), (30000, 8000), (18106, 5700)]),
    ];
    let mut out = Vec::new();
    for (si, (session, turns)) in sessions.into_iter().enumerate() {
        for (ti, &(tokens, wall)) in turns.iter().enumerate() {
            let at = t0 + Duration::minutes((si * 10 + ti) as i64);
            let turn = ti as u64 + 1;
            let detection = tokens / 8;
            let prompts = vec![
                prompt(session, turn, Stage::ActionDetection, detection, wall / 4, at),
                prompt(session, turn, Stage::Reduction, tokens - detection, wall / 2, at),
            ];
            push_turn(&mut out, prompts, wall, ActionKind::Search);
        }
    }
    out
}

/// 83 responses: 71 rate Recommendation Accuracy 3 or above and 69 report
/// success; 8 of the 12 low accuracy ratings come with failure.
pub fn survey_sample() -> Vec<SurveyResponse> {
    // accuracy rating -> how many responses carry it
    let accuracy: [(u8, usize); 5] = [(1, 4), (2, 8), (3, 20), (4, 30), (5, 21)];
    let mut ratings: Vec<u8> = accuracy.iter().flat_map(|&(v, n)| std::iter::repeat_n(v, n)).collect();
    ratings.rotate_left(5);
    let mut low_failures = 8;
    let mut other_failures = 6;
    ratings
        .into_iter()
        .enumerate()
        .map(|(i, ra)| {
            let success = if ra <= 2 && low_failures > 0 {
                low_failures -= 1;
                false
            } else if ra > 2 && i % 7 == 0 && other_failures > 0 {
                other_failures -= 1;
                false
            } else {
                true
            };
            let items: BTreeMap<Construct, u8> = Construct::ALL
                .into_iter()
                .map(|c| (c, if c == Construct::RecommendationAccuracy { ra } else { 3 + (i % 3) as u8 }))
                .collect();
            SurveyResponse {
                response_id: format!("r{i:03}"),
                session_id: format!("s{i:03}"),
                items,
                success,
                perceived_effort: success.then_some(2),
                general_problems: (!success).then(|| "did not find a fitting event".to_string()),
                demographics: None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn catalog_is_seeded() {
        let t = Utc.with_ymd_and_hms(2023, 10, 18, 12, 0, 0).unwrap();
        let a = synthetic_catalog(&CatalogSpec::default(), t, 7);
        let b = synthetic_catalog(&CatalogSpec::default(), t, 7);
        assert_eq!(a.len(), 100);
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        assert_ne!(a.to_jsonl(), synthetic_catalog(&CatalogSpec::default(), t, 8).to_jsonl());
    }

    #[test]
    fn survey_sample_counts() {
        let s = survey_sample();
        assert_eq!(s.len(), 83);
        assert_eq!(s.iter().filter(|r| r.item(Construct::RecommendationAccuracy) >= 3).count(), 71);
        assert_eq!(s.iter().filter(|r| r.success).count(), 69);
        let low_fail = s.iter().filter(|r| r.item(Construct::RecommendationAccuracy) <= 2 && !r.success).count();
        assert_eq!(low_fail, 8);
    }
}
