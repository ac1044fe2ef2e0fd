//! Minimal HTML to text conversion for event pages.

use std::sync::LazyLock;

use regex::Regex;

static DROPPED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?is)<!--.*?-->|<(script|style|nav|noscript|head|template|svg)\b[^>]*>.*?</(script|style|nav|noscript|head|template|svg)\s*>")
        .expect("valid regex")
});
static BLOCK: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)</?(p|div|br|li|ul|ol|h[1-6]|tr|td|th|section|article|header|footer|main|table)\b[^>]*>")
        .expect("valid regex")
});
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>").expect("valid regex"));
static ENTITY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"&(#[0-9]+|#[xX][0-9a-fA-F]+|[a-zA-Z]+);").expect("valid regex"));

fn decode_entity(name: &str) -> Option<String> {
    let ch = match name {
        "amp" => '&',
        "lt" => '<',
        "gt" => '>',
        "quot" => '"',
        "apos" => '\'',
        "nbsp" => ' ',
        "euro" => '€',
        "ndash" => '–',
        "mdash" => '—',
        "hellip" => '…',
        n if n.starts_with("#x") || n.starts_with("#X") => char::from_u32(u32::from_str_radix(&n[2..], 16).ok()?)?,
        n if n.starts_with('#') => char::from_u32(n[1..].parse().ok()?)?,
        _ => return None,
    };
    Some(ch.to_string())
}

/// Visible text of `html`: scripts, styles, navigation and comments removed,
/// tags stripped, entities decoded, whitespace collapsed.
pub fn html_to_text(html: &str) -> String {
    let s = DROPPED.replace_all(html, " ");
    let s = BLOCK.replace_all(&s, " ");
    let s = TAG.replace_all(&s, "");
    let s = ENTITY.replace_all(&s, |c: &regex::Captures<'_>| decode_entity(&c[1]).unwrap_or_else(|| c[0].to_string()));
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
