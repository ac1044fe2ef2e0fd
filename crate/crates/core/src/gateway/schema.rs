//! Output schemas for structured LLM replies.
//!
//! A schema describes one JSON object. It renders the format instructions
//! embedded in prompts and validates parsed replies, so both sides of the
//! contract come from the same definition.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    String,
    Bool,
    Integer,
    Number,
    Enum(Vec<String>),
    Array(Box<FieldKind>),
    Object(Vec<FieldSpec>),
}

impl FieldKind {
    fn describe(&self) -> String {
        match self {
            FieldKind::String => "string".into(),
            FieldKind::Bool => "boolean".into(),
            FieldKind::Integer => "integer".into(),
            FieldKind::Number => "number".into(),
            FieldKind::Enum(values) => format!("one of {}", values.iter().map(|v| format!("\"{v}\"")).collect::<Vec<_>>().join(" | ")),
            FieldKind::Array(inner) => format!("array of {}", inner.describe()),
            FieldKind::Object(fields) => {
                let inner: Vec<String> = fields.iter().map(|f| format!("\"{}\": {}", f.name, f.kind.describe())).collect();
                format!("object {{{}}}", inner.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    pub required: bool,
    pub description: String,
}

impl FieldSpec {
    pub fn required(name: &str, kind: FieldKind, description: &str) -> Self {
        FieldSpec { name: name.into(), kind, required: true, description: description.into() }
    }

    /// Optional fields may be omitted or `null`.
    pub fn optional(name: &str, kind: FieldKind, description: &str) -> Self {
        FieldSpec { name: name.into(), kind, required: false, description: description.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub id: String,
    pub fields: Vec<FieldSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}{}: {reason}", .position.map(|p| format!("at byte {p}")).unwrap_or_else(|| "reply".into()), .field.as_ref().map(|f| format!(", field `{f}`")).unwrap_or_default())]
pub struct ParseError {
    /// Byte offset in the raw reply where the payload (or the failure) starts.
    pub position: Option<usize>,
    pub field: Option<String>,
    pub reason: String,
}

impl Schema {
    pub fn new(id: &str, fields: Vec<FieldSpec>) -> Self {
        Schema { id: id.into(), fields }
    }

    /// Format instructions appended to prompts that expect this schema.
    pub fn format_instructions(&self) -> String {
        let mut out = String::from(
            "Respond with a single JSON object and nothing else. The object has these fields:\n",
        );
        for f in &self.fields {
            let _ = writeln!(
                out,
                "- \"{}\" ({}{}): {}",
                f.name,
                f.kind.describe(),
                if f.required { ", required" } else { ", optional, may be null" },
                f.description
            );
        }
        out
    }

    pub fn validate(&self, value: &Value) -> Result<(), (String, String)> {
        match value {
            Value::Object(obj) => validate_fields(&self.fields, obj, ""),
            _ => Err((String::new(), "expected a JSON object".into())),
        }
    }
}

fn validate_fields(fields: &[FieldSpec], obj: &Map<String, Value>, prefix: &str) -> Result<(), (String, String)> {
    for f in fields {
        let path = if prefix.is_empty() { f.name.clone() } else { format!("{prefix}.{}", f.name) };
        match obj.get(&f.name) {
            None | Some(Value::Null) if f.required => {
                return Err((path, "missing required field".into()));
            }
            None | Some(Value::Null) => {}
            Some(v) => validate_kind(&f.kind, v, &path)?,
        }
    }
    Ok(())
}

fn validate_kind(kind: &FieldKind, v: &Value, path: &str) -> Result<(), (String, String)> {
    let bad = |what: &str| Err((path.to_string(), format!("expected {what}")));
    match kind {
        FieldKind::String if v.is_string() => Ok(()),
        FieldKind::Bool if v.is_boolean() => Ok(()),
        FieldKind::Integer if v.is_i64() || v.is_u64() => Ok(()),
        FieldKind::Number if v.is_number() => Ok(()),
        FieldKind::Enum(values) => match v.as_str() {
            Some(s) if values.iter().any(|x| x == s) => Ok(()),
            _ => bad(&kind.describe()),
        },
        FieldKind::Array(inner) => match v.as_array() {
            Some(items) => {
                for (i, item) in items.iter().enumerate() {
                    validate_kind(inner, item, &format!("{path}[{i}]"))?;
                }
                Ok(())
            }
            None => bad("array"),
        },
        FieldKind::Object(fields) => match v.as_object() {
            Some(obj) => validate_fields(fields, obj, path),
            None => bad("object"),
        },
        other => bad(&other.describe()),
    }
}

/// Extract and validate the JSON object in `raw_text`.
///
/// Prose before or after the payload (including code fences) is ignored:
/// the first `{` that starts a syntactically complete JSON object is taken
/// as the payload.
pub fn parse_structured(raw_text: &str, schema: &Schema) -> Result<Value, ParseError> {
    let mut first_error: Option<ParseError> = None;
    for (pos, _) in raw_text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw_text[pos..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(value)) => {
                return match schema.validate(&value) {
                    Ok(()) => Ok(value),
                    Err((field, reason)) => Err(ParseError {
                        position: Some(pos),
                        field: (!field.is_empty()).then_some(field),
                        reason,
                    }),
                };
            }
            Some(Err(e)) => {
                first_error.get_or_insert(ParseError {
                    position: Some(pos),
                    field: None,
                    reason: format!("malformed JSON: {e}"),
                });
            }
            None => {}
        }
    }
    Err(first_error.unwrap_or(ParseError {
        position: None,
        field: None,
        reason: "no JSON object found".into(),
    }))
}

/// Schemas known to the gateway, keyed by id.
#[derive(Debug, Clone, Default)]
pub struct SchemaRegistry {
    schemas: BTreeMap<String, Schema>,
}

impl SchemaRegistry {
    pub fn register(&mut self, schema: Schema) {
        self.schemas.insert(schema.id.clone(), schema);
    }

    pub fn get(&self, id: &str) -> Option<&Schema> {
        self.schemas.get(id)
    }

    /// Registry holding the schemas used by the dialog pipeline.
    pub fn builtin() -> Self {
        let mut reg = SchemaRegistry::default();
        for s in builtin_schemas() {
            reg.register(s);
        }
        reg
    }
}

pub const ACTION_DETECTION: &str = "action_detection";
pub const SEARCH_QUERY: &str = "search_query";
pub const RECOMMENDER_QUERY: &str = "recommender_query";
pub const REDUCTION: &str = "reduction";

fn category_kind() -> FieldKind {
    FieldKind::Enum(crate::catalog::Category::ALL.iter().map(|c| c.as_str().to_string()).collect())
}

fn window_kind() -> FieldKind {
    FieldKind::Object(vec![
        FieldSpec::required("start", FieldKind::String, "RFC 3339 timestamp"),
        FieldSpec::required("end", FieldKind::String, "RFC 3339 timestamp"),
    ])
}

fn builtin_schemas() -> Vec<Schema> {
    use FieldKind::*;
    vec![
        Schema::new(
            ACTION_DETECTION,
            vec![
                FieldSpec::optional("reasoning", String, "one short sentence explaining the choice"),
                FieldSpec::required(
                    "action",
                    Enum(["Chat", "Refusal", "Search", "Recommendation", "TargetedInquiry"].map(Into::into).to_vec()),
                    "the action to take for this message",
                ),
                FieldSpec::optional("reply", String, "the answer to send, only for Chat"),
                FieldSpec::optional("time_window", window_kind(), "time range the user asked for, if stated"),
                FieldSpec::optional("location", String, "place or area the user asked for, if stated"),
                FieldSpec::optional("target_event_id", String, "id of the shown event the question is about"),
                FieldSpec::optional("keywords", Array(Box::new(String)), "search terms from the message"),
            ],
        ),
        Schema::new(
            SEARCH_QUERY,
            vec![
                FieldSpec::required("query", String, "search text describing the wanted events"),
                FieldSpec::optional("keywords", Array(Box::new(String)), "terms an event must mention"),
                FieldSpec::optional("category", category_kind(), "event category, if the user named one"),
                FieldSpec::optional("max_price", Number, "highest acceptable price, if stated"),
            ],
        ),
        Schema::new(
            RECOMMENDER_QUERY,
            vec![
                FieldSpec::required("preference", String, "what the user likes, in a few words"),
                FieldSpec::optional("category", category_kind(), "event category, if the user named one"),
                FieldSpec::optional("max_price", Number, "highest acceptable price, if stated"),
            ],
        ),
        Schema::new(
            REDUCTION,
            vec![FieldSpec::required(
                "verdicts",
                Array(Box::new(Object(vec![
                    FieldSpec::required("id", String, "event id"),
                    FieldSpec::required("matches", Bool, "true if the event fits the request"),
                ]))),
                "one entry per listed event",
            )],
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn detection() -> Schema {
        SchemaRegistry::builtin().get(ACTION_DETECTION).unwrap().clone()
    }

    #[test]
    fn bare_payload_round_trips() {
        let payload = json!({"action": "Chat", "reply": "Hi!"});
        let text = serde_json::to_string(&payload).unwrap();
        let parsed = parse_structured(&text, &detection()).unwrap();
        assert_eq!(parsed, payload);
        assert_eq!(serde_json::to_string(&parsed).unwrap(), text);
    }

    #[test]
    fn surrounding_prose_is_stripped() {
        let bare = r#"{"action": "Search", "keywords": ["jazz"]}"#;
        let wrapped = format!("Sure! Here is the result: ```json\n{bare}\n``` Let me know if you need more.");
        assert_eq!(
            parse_structured(&wrapped, &detection()).unwrap(),
            parse_structured(bare, &detection()).unwrap()
        );
    }

    #[test]
    fn missing_required_field_is_named() {
        let err = parse_structured(r#"{"reply": "hello"}"#, &detection()).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("action"));
        assert_eq!(err.position, Some(0));
    }

    #[test]
    fn nested_type_errors_carry_path() {
        let reduction = SchemaRegistry::builtin().get(REDUCTION).unwrap().clone();
        let err = parse_structured(r#"{"verdicts": [{"id": "e1", "matches": "yes"}]}"#, &reduction).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("verdicts[0].matches"));
    }

    #[test]
    fn enum_and_garbage() {
        assert!(parse_structured(r#"{"action": "Dance"}"#, &detection()).is_err());
        let err = parse_structured("no json here", &detection()).unwrap_err();
        assert_eq!(err.position, None);
        let err = parse_structured("prefix {\"action\": ", &detection()).unwrap_err();
        assert_eq!(err.position, Some(7));
    }

    #[test]
    fn instructions_list_every_field() {
        let text = detection().format_instructions();
        for f in &detection().fields {
            assert!(text.contains(&format!("\"{}\"", f.name)));
        }
    }
}
