//! Survey responses: ten single-item Likert constructs plus the success block.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Construct {
    RecommendationAccuracy,
    InterfaceAdequacy,
    Consistency,
    Coherence,
    InputProcessingPerformance,
    Control,
    PerceivedUsefulness,
    Confidence,
    OverallSatisfaction,
    FutureUse,
}

impl Construct {
    pub const ALL: [Construct; 10] = [
        Construct::RecommendationAccuracy,
        Construct::InterfaceAdequacy,
        Construct::Consistency,
        Construct::Coherence,
        Construct::InputProcessingPerformance,
        Construct::Control,
        Construct::PerceivedUsefulness,
        Construct::Confidence,
        Construct::OverallSatisfaction,
        Construct::FutureUse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Construct::RecommendationAccuracy => "RecommendationAccuracy",
            Construct::InterfaceAdequacy => "InterfaceAdequacy",
            Construct::Consistency => "Consistency",
            Construct::Coherence => "Coherence",
            Construct::InputProcessingPerformance => "InputProcessingPerformance",
            Construct::Control => "Control",
            Construct::PerceivedUsefulness => "PerceivedUsefulness",
            Construct::Confidence => "Confidence",
            Construct::OverallSatisfaction => "OverallSatisfaction",
            Construct::FutureUse => "FutureUse",
        }
    }

    /// Human-readable label, e.g. "Overall Satisfaction".
    pub fn label(self) -> String {
        let mut out = String::new();
        for (i, c) in self.name().char_indices() {
            if i > 0 && c.is_ascii_uppercase() {
                out.push(' ');
            }
            out.push(c);
        }
        out
    }

    /// Accepts the identifier or the spaced label, case-insensitively.
    pub fn parse(s: &str) -> Option<Construct> {
        let key: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
        Construct::ALL.into_iter().find(|c| c.name().to_lowercase() == key)
    }
}

impl fmt::Display for Construct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const LIKERT_MIN: u8 = 1;
pub const LIKERT_MAX: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
}

/// A validated response. `items` holds all ten constructs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub response_id: String,
    pub session_id: String,
    pub items: BTreeMap<Construct, u8>,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perceived_effort: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub general_problems: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<Demographics>,
}

impl SurveyResponse {
    pub fn item(&self, c: Construct) -> u8 {
        self.items[&c]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SurveyError {
    #[error("incomplete response, missing: {}", .0.join(", "))]
    Incomplete(Vec<String>),
    #[error("{field} = {value} is outside 1..=5")]
    OutOfRange { field: String, value: String },
    #[error("{0}")]
    ConditionalField(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

fn likert(field: &str, v: &Value) -> Result<u8, SurveyError> {
    match v.as_u64() {
        Some(n) if (LIKERT_MIN as u64..=LIKERT_MAX as u64).contains(&n) => Ok(n as u8),
        _ => Err(SurveyError::OutOfRange { field: field.into(), value: v.to_string() }),
    }
}

fn present(v: Option<&Value>) -> Option<&Value> {
    v.filter(|v| !v.is_null())
}

/// Check a raw JSON response. All ten items and `success` must be present;
/// `perceived_effort` is required with success and forbidden otherwise,
/// `general_problems` only allowed without success.
pub fn validate_response(raw: &Value) -> Result<SurveyResponse, SurveyError> {
    let obj = raw.as_object().ok_or_else(|| SurveyError::Malformed("expected a JSON object".into()))?;
    let items_raw = present(obj.get("items")).and_then(Value::as_object);
    let mut missing = Vec::new();
    let mut items = BTreeMap::new();
    for c in Construct::ALL {
        match items_raw.and_then(|m| present(m.get(c.name()))) {
            Some(v) => {
                items.insert(c, likert(c.name(), v)?);
            }
            None => missing.push(c.name().to_string()),
        }
    }
    if let Some(m) = items_raw {
        if let Some(k) = m.keys().find(|k| Construct::parse(k).map(Construct::name) != Some(k.as_str())) {
            return Err(SurveyError::Malformed(format!("unknown item `{k}`")));
        }
    }
    let success = present(obj.get("success"));
    if success.is_none() {
        missing.push("success".into());
    }
    let text = |k: &str| present(obj.get(k)).and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty());
    let session_id = text("session_id");
    if session_id.is_none() {
        missing.push("session_id".into());
    }
    let success = match success {
        Some(v) => Some(v.as_bool().ok_or_else(|| SurveyError::Malformed("`success` must be a boolean".into()))?),
        None => None,
    };
    let effort = present(obj.get("perceived_effort"));
    if success == Some(true) && effort.is_none() {
        missing.push("perceived_effort".into());
    }
    if !missing.is_empty() {
        return Err(SurveyError::Incomplete(missing));
    }
    let success = success.expect("checked above");
    let perceived_effort = effort.map(|v| likert("perceived_effort", v)).transpose()?;
    let general_problems = text("general_problems").map(String::from);
    if !success && perceived_effort.is_some() {
        return Err(SurveyError::ConditionalField("perceived_effort is only asked after a successful session".into()));
    }
    if success && general_problems.is_some() {
        return Err(SurveyError::ConditionalField(
            "general_problems is only asked after an unsuccessful session".into(),
        ));
    }
    let demographics = match present(obj.get("demographics")) {
        Some(v) => Some(serde_json::from_value(v.clone()).map_err(|e| SurveyError::Malformed(e.to_string()))?),
        None => None,
    };
    Ok(SurveyResponse {
        response_id: text("response_id").unwrap_or_default().to_string(),
        session_id: session_id.expect("checked above").to_string(),
        items,
        success,
        perceived_effort,
        general_problems,
        demographics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstructStats {
    pub construct: Construct,
    /// Count of ratings 1..=5.
    pub counts: [usize; 5],
    pub neutral_or_good: usize,
    pub neutral_or_good_pct: f64,
    pub negative: usize,
    pub negative_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub constructs: Vec<ConstructStats>,
    pub success: usize,
    pub success_pct: f64,
}

impl DescriptiveStats {
    pub fn construct(&self, c: Construct) -> &ConstructStats {
        self.constructs.iter().find(|s| s.construct == c).expect("all constructs are summarized")
    }
}

fn pct(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * k as f64 / n as f64
    }
}

/// Rating distributions, shares of ratings >= 3 and < 3, and the success rate.
pub fn descriptive_stats(responses: &[SurveyResponse]) -> DescriptiveStats {
    let n = responses.len();
    let constructs = Construct::ALL
        .into_iter()
        .map(|c| {
            let mut counts = [0usize; 5];
            for r in responses {
                counts[(r.item(c) - 1) as usize] += 1;
            }
            let good: usize = counts[2..].iter().sum();
            ConstructStats {
                construct: c,
                counts,
                neutral_or_good: good,
                neutral_or_good_pct: pct(good, n),
                negative: n - good,
                negative_pct: pct(n - good, n),
            }
        })
        .collect();
    let success = responses.iter().filter(|r| r.success).count();
    DescriptiveStats { n, constructs, success, success_pct: pct(success, n) }
}

/// Responses as CSV, one column per construct.
pub fn responses_to_csv(responses: &[SurveyResponse]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["response_id".to_string(), "session_id".to_string()];
    header.extend(Construct::ALL.iter().map(|c| c.name().to_string()));
    header.extend(["success", "perceived_effort", "general_problems", "age", "gender"].map(String::from));
    w.write_record(&header).expect("in-memory csv write");
    for r in responses {
        let mut row = vec![r.response_id.clone(), r.session_id.clone()];
        row.extend(Construct::ALL.iter().map(|c| r.item(*c).to_string()));
        row.push(r.success.to_string());
        row.push(r.perceived_effort.map(|e| e.to_string()).unwrap_or_default());
        row.push(r.general_problems.clone().unwrap_or_default());
        let d = r.demographics.as_ref();
        row.push(d.and_then(|d| d.age).map(|a| a.to_string()).unwrap_or_default());
        row.push(d.and_then(|d| d.gender.clone()).unwrap_or_default());
        w.write_record(&row).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn raw(value: u8, success: bool) -> Value {
        let items: serde_json::Map<String, Value> = Construct::ALL.iter().map(|c| (c.name().into(), json!(value))).collect();
        let mut v = json!({"response_id": "r1", "session_id": "s1", "items": items, "success": success});
        if success {
            v["perceived_effort"] = json!(2);
        }
        v
    }

    #[test]
    fn mid_scale_response_is_accepted() {
        let r = validate_response(&raw(3, true)).unwrap();
        assert_eq!(r.perceived_effort, Some(2));
        assert!(r.items.values().all(|v| *v == 3));
    }

    #[test]
    fn missing_item_is_named() {
        let mut v = raw(3, true);
        v["items"].as_object_mut().unwrap().remove("FutureUse");
        assert_eq!(validate_response(&v).unwrap_err(), SurveyError::Incomplete(vec!["FutureUse".into()]));
    }

    #[test]
    fn out_of_range_rejected() {
        let mut v = raw(3, false);
        v["items"]["Control"] = json!(6);
        assert!(matches!(validate_response(&v), Err(SurveyError::OutOfRange { field, .. }) if field == "Control"));
        v["items"]["Control"] = json!(0);
        assert!(validate_response(&v).is_err());
    }

    #[test]
    fn conditional_fields() {
        let mut v = raw(3, true);
        v["general_problems"] = json!("slow");
        assert!(matches!(validate_response(&v), Err(SurveyError::ConditionalField(_))));

        let mut v = raw(3, false);
        v["perceived_effort"] = json!(2);
        assert!(matches!(validate_response(&v), Err(SurveyError::ConditionalField(_))));

        let mut v = raw(3, false);
        v["general_problems"] = json!("loading took long");
        assert_eq!(validate_response(&v).unwrap().general_problems.as_deref(), Some("loading took long"));

        let mut v = raw(3, true);
        v.as_object_mut().unwrap().remove("perceived_effort");
        assert_eq!(validate_response(&v).unwrap_err(), SurveyError::Incomplete(vec!["perceived_effort".into()]));
    }

    #[test]
    fn all_fives_are_all_positive() {
        let rs: Vec<_> = (0..4).map(|_| validate_response(&raw(5, true)).unwrap()).collect();
        let s = descriptive_stats(&rs);
        for c in &s.constructs {
            assert_eq!(c.neutral_or_good_pct, 100.0);
            assert_eq!(c.negative_pct, 0.0);
            assert_eq!(c.counts, [0, 0, 0, 0, 4]);
        }
        assert_eq!(s.success_pct, 100.0);
    }

    #[test]
    fn construct_labels_round_trip() {
        for c in Construct::ALL {
            assert_eq!(Construct::parse(&c.label()), Some(c));
            assert_eq!(Construct::parse(c.name()), Some(c));
        }
        assert_eq!(Construct::OverallSatisfaction.label(), "Overall Satisfaction");
    }

    #[test]
    fn csv_has_one_row_per_response() {
        let mut v = raw(2, false);
        v["general_problems"] = json!("slow, \"really\"");
        let r = validate_response(&v).unwrap();
        let csv = responses_to_csv(&[r]);
        let mut rd = csv::Reader::from_reader(csv.as_bytes());
        let rows: Vec<_> = rd.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 1);
        assert_eq!(&rows[0][2], "2");
        assert_eq!(&rows[0][14], "slow, \"really\"");
    }
}
