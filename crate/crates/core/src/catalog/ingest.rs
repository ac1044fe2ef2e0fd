use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Catalog, Category, EventRecord, Price};
use crate::Money;

const DEFAULT_CATEGORIES: &str = include_str!("../../config/categories.toml");

/// Mapping table from raw scraped category labels to the closed set.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct CategoryMap {
    aliases: HashMap<String, Category>,
    #[serde(default = "default_currency")]
    default_currency: String,
    #[serde(default = "default_language")]
    default_language: String,
}

fn default_currency() -> String {
    "EUR".into()
}

fn default_language() -> String {
    "und".into()
}

impl Default for CategoryMap {
    fn default() -> Self {
        CategoryMap::from_toml(DEFAULT_CATEGORIES).expect("bundled category table parses")
    }
}

impl CategoryMap {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        let mut map: CategoryMap = toml::from_str(text)?;
        map.aliases = map.aliases.into_iter().map(|(k, v)| (normalize_label(&k), v)).collect();
        Ok(map)
    }

    pub fn map(&self, raw: &str) -> Category {
        if let Some(c) = Category::parse_canonical(raw) {
            return c;
        }
        self.aliases.get(&normalize_label(raw)).copied().unwrap_or(Category::Other)
    }
}

fn normalize_label(s: &str) -> String {
    s.trim().to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RejectReason {
    MalformedRecord,
    MissingId,
    DuplicateId,
    MissingTitle,
    MissingStartTime,
    UnparsableTimestamp,
    EndBeforeStart,
    NegativePrice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// Zero-based position in the input stream.
    pub index: usize,
    pub id: Option<String>,
    pub reason: RejectReason,
}

/// Outcome of one ingest run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
    pub rejected_by_reason: BTreeMap<RejectReason, usize>,
    pub rejections: Vec<Rejection>,
    /// Per optional column, how many accepted records lack it.
    pub absent_fields: BTreeMap<String, usize>,
    /// Accepted records whose raw category label was unknown and mapped to Other.
    pub unmapped_categories: usize,
    /// Accepted records whose price text could not be read; the price is left absent.
    pub unparsable_prices: usize,
}

impl IngestReport {
    fn reject(&mut self, index: usize, id: Option<String>, reason: RejectReason) {
        self.rejected += 1;
        *self.rejected_by_reason.entry(reason).or_default() += 1;
        self.rejections.push(Rejection { index, id, reason });
    }
}

const OPTIONAL_COLUMNS: [&str; 6] = ["description", "end_time", "venue_name", "city_area", "price", "source_url"];

fn take<'a>(obj: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().filter_map(|k| obj.get(*k)).find(|v| !v.is_null())
}

fn text_of(v: &Value) -> Option<String> {
    let s = match v {
        Value::String(s) => s.trim().to_string(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        _ => return None,
    };
    (!s.is_empty()).then_some(s)
}

enum TimeField {
    Absent,
    Bad,
    Ok(DateTime<Utc>),
}

fn parse_time(v: Option<&Value>) -> TimeField {
    let Some(v) = v else { return TimeField::Absent };
    match v {
        Value::Number(n) => match n.as_i64().and_then(|s| DateTime::from_timestamp(s, 0)) {
            Some(t) => TimeField::Ok(t),
            None => TimeField::Bad,
        },
        Value::String(s) if s.trim().is_empty() => TimeField::Absent,
        Value::String(s) => parse_time_str(s.trim()).map_or(TimeField::Bad, TimeField::Ok),
        _ => TimeField::Bad,
    }
}

fn parse_time_str(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc())
}

enum PriceField {
    Absent,
    Unreadable,
    Negative,
    Ok(Price),
}

fn price_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?P<pre>[A-Z]{3}|€|\$|£)?\s*(?P<amt>-?\d+(?:[.,]\d+)?)\s*(?P<post>[A-Z]{3}|€|\$|£)?$")
            .expect("price regex compiles")
    })
}

fn currency_code(symbol: &str) -> String {
    match symbol {
        "€" => "EUR".into(),
        "$" => "USD".into(),
        "£" => "GBP".into(),
        code => code.to_string(),
    }
}

fn parse_amount(s: &str) -> Option<Money> {
    Money::from_str(&s.replace(',', ".")).ok()
}

fn parse_price(obj: &Map<String, Value>, default_currency: &str) -> PriceField {
    let explicit_currency = take(obj, &["currency"]).and_then(text_of);
    let Some(raw) = take(obj, &["price"]) else { return PriceField::Absent };
    let (amount, currency) = match raw {
        Value::Number(n) => (parse_amount(&n.to_string()), None),
        Value::String(s) => {
            let s = s.trim();
            if s.is_empty() {
                return PriceField::Absent;
            }
            if ["free", "gratis", "kostenlos"].contains(&s.to_lowercase().as_str()) {
                (Some(Money::ZERO), None)
            } else if let Some(c) = price_regex().captures(s) {
                let cur = c.name("pre").or(c.name("post")).map(|m| currency_code(m.as_str()));
                (parse_amount(&c["amt"]), cur)
            } else {
                (None, None)
            }
        }
        Value::Object(p) => {
            let amt = p.get("amount").and_then(text_of).and_then(|s| parse_amount(&s));
            (amt, p.get("currency").and_then(text_of))
        }
        _ => (None, None),
    };
    match amount {
        None => PriceField::Unreadable,
        Some(a) if a.is_sign_negative() && !a.is_zero() => PriceField::Negative,
        Some(amount) => PriceField::Ok(Price {
            amount,
            currency: currency.or(explicit_currency).unwrap_or_else(|| default_currency.to_string()),
        }),
    }
}

const KNOWN_KEYS: [&str; 19] = [
    "id", "title", "name", "description", "category", "start_time", "start", "end_time", "end",
    "venue_name", "venue", "city_area", "area", "price", "currency", "source_url", "url", "language", "extra",
];

/// Validate raw event maps into a catalog.
///
/// Rejected records never abort the run; each one is listed in the report
/// with its reason.
pub fn ingest_catalog<I>(records: I, categories: &CategoryMap) -> (Catalog, IngestReport)
where
    I: IntoIterator<Item = Value>,
{
    ingest_results(records.into_iter().map(Ok), categories)
}

/// Ingest a JSON Lines stream; blank lines are skipped, unparsable lines are
/// rejected as malformed.
pub fn ingest_jsonl<R: BufRead>(reader: R, categories: &CategoryMap) -> std::io::Result<(Catalog, IngestReport)> {
    let mut values = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        values.push(serde_json::from_str::<Value>(&line).map_err(|_| ()));
    }
    Ok(ingest_results(values, categories))
}

fn ingest_results<I>(records: I, categories: &CategoryMap) -> (Catalog, IngestReport)
where
    I: IntoIterator<Item = Result<Value, ()>>,
{
    let mut report = IngestReport::default();
    for col in OPTIONAL_COLUMNS {
        report.absent_fields.insert(col.to_string(), 0);
    }
    let mut seen = HashSet::new();
    let mut accepted = Vec::new();

    for (index, raw) in records.into_iter().enumerate() {
        let Ok(Value::Object(obj)) = raw else {
            report.reject(index, None, RejectReason::MalformedRecord);
            continue;
        };
        let Some(id) = take(&obj, &["id"]).and_then(text_of) else {
            report.reject(index, None, RejectReason::MissingId);
            continue;
        };
        match build_record(&obj, &id, categories) {
            Err(reason) => report.reject(index, Some(id), reason),
            Ok(_) if seen.contains(&id) => report.reject(index, Some(id), RejectReason::DuplicateId),
            Ok((record, flags)) => {
                seen.insert(id);
                report.unmapped_categories += flags.unmapped_category as usize;
                report.unparsable_prices += flags.unreadable_price as usize;
                for (col, absent) in [
                    ("description", record.description.is_none()),
                    ("end_time", record.end_time.is_none()),
                    ("venue_name", record.venue_name.is_none()),
                    ("city_area", record.city_area.is_none()),
                    ("price", record.price.is_none()),
                    ("source_url", record.source_url.is_none()),
                ] {
                    if absent {
                        *report.absent_fields.get_mut(col).expect("column registered") += 1;
                    }
                }
                accepted.push(record);
            }
        }
    }
    report.accepted = accepted.len();
    (Catalog::from_accepted(accepted), report)
}

#[derive(Default)]
struct RecordFlags {
    unmapped_category: bool,
    unreadable_price: bool,
}

fn build_record(
    obj: &Map<String, Value>,
    id: &str,
    categories: &CategoryMap,
) -> Result<(EventRecord, RecordFlags), RejectReason> {
    let mut flags = RecordFlags::default();
    let title = take(obj, &["title", "name"]).and_then(text_of).ok_or(RejectReason::MissingTitle)?;
    let start_time = match parse_time(take(obj, &["start_time", "start"])) {
        TimeField::Absent => return Err(RejectReason::MissingStartTime),
        TimeField::Bad => return Err(RejectReason::UnparsableTimestamp),
        TimeField::Ok(t) => t,
    };
    let end_time = match parse_time(take(obj, &["end_time", "end"])) {
        TimeField::Absent => None,
        TimeField::Bad => return Err(RejectReason::UnparsableTimestamp),
        TimeField::Ok(t) if t < start_time => return Err(RejectReason::EndBeforeStart),
        TimeField::Ok(t) => Some(t),
    };
    let category = match take(obj, &["category"]).and_then(text_of) {
        Some(raw) => {
            let c = categories.map(&raw);
            flags.unmapped_category = c == Category::Other && !raw.eq_ignore_ascii_case("other");
            c
        }
        None => Category::Other,
    };
    let price = match parse_price(obj, &categories.default_currency) {
        PriceField::Absent => None,
        PriceField::Unreadable => {
            flags.unreadable_price = true;
            None
        }
        PriceField::Negative => return Err(RejectReason::NegativePrice),
        PriceField::Ok(p) => Some(p),
    };
    let mut extra = BTreeMap::new();
    if let Some(Value::Object(nested)) = obj.get("extra") {
        for (k, v) in nested {
            if let Some(s) = text_of(v) {
                extra.insert(k.clone(), s);
            }
        }
    }
    for (k, v) in obj {
        if KNOWN_KEYS.contains(&k.as_str()) {
            continue;
        }
        let s = match v {
            Value::Array(_) | Value::Object(_) => Some(v.to_string()),
            other => text_of(other),
        };
        if let Some(s) = s {
            extra.insert(k.clone(), s);
        }
    }
    let record = EventRecord {
        id: id.to_string(),
        title,
        description: take(obj, &["description"]).and_then(text_of),
        category,
        start_time,
        end_time,
        venue_name: take(obj, &["venue_name", "venue"]).and_then(text_of),
        city_area: take(obj, &["city_area", "area"]).and_then(text_of),
        price,
        source_url: take(obj, &["source_url", "url"]).and_then(text_of),
        language: take(obj, &["language"])
            .and_then(text_of)
            .unwrap_or_else(|| categories.default_language.clone()),
        extra,
    };
    Ok((record, flags))
}
