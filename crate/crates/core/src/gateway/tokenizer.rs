//! Offline token estimator.
//!
//! Text is segmented into runs of alphanumeric characters and single
//! punctuation/symbol characters; whitespace is free. A run of `n`
//! alphanumeric characters costs `ceil(n / 4)` tokens, which tracks byte-pair
//! tokenizers on ordinary prose closely enough to gate the context budget,
//! and it keeps two properties the budget logic relies on:
//!
//! * `count(a + b) >= max(count(a), count(b))`
//! * `count(a + b) <= count(a) + count(b) + 1`

/// Characters per token inside an alphanumeric run.
pub const CHARS_PER_TOKEN: usize = 4;

/// Byte span `[start, end)` of one token in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Iterate over token spans in order.
pub fn token_spans(text: &str) -> impl Iterator<Item = TokenSpan> + '_ {
    let mut chars = text.char_indices().peekable();
    std::iter::from_fn(move || {
        while let Some(&(start, c)) = chars.peek() {
            if c.is_whitespace() {
                chars.next();
                continue;
            }
            if !is_word_char(c) {
                chars.next();
                return Some(TokenSpan { start, end: start + c.len_utf8() });
            }
            // one chunk of a word run
            let mut end = start;
            for _ in 0..CHARS_PER_TOKEN {
                match chars.peek() {
                    Some(&(i, c)) if is_word_char(c) => {
                        end = i + c.len_utf8();
                        chars.next();
                    }
                    _ => break,
                }
            }
            return Some(TokenSpan { start, end });
        }
        None
    })
}

/// Estimated token count of `text`.
pub fn count_tokens(text: &str) -> usize {
    token_spans(text).count()
}

/// Longest prefix of `text` holding at most `max_tokens` tokens, cut at a
/// token boundary.
pub fn truncate_to_tokens(text: &str, max_tokens: usize) -> &str {
    if max_tokens == 0 {
        return "";
    }
    match token_spans(text).nth(max_tokens - 1) {
        Some(span) if span.end < text.len() => {
            if token_spans(&text[span.end..]).next().is_none() {
                text
            } else {
                &text[..span.end]
            }
        }
        _ => text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_zero() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("   \n\t"), 0);
    }

    #[test]
    fn golden_sentence() {
        // The, quick, brown, fox, jumps, over, the, lazy, dog, again + "."
        // run lengths 3,5,5,3,5,4,3,4,3,5 -> 1,2,2,1,2,1,1,1,1,2 = 14, plus "." = 15
        assert_eq!(count_tokens("The quick brown fox jumps over the lazy dog again."), 15);
    }

    #[test]
    fn punctuation_and_unicode() {
        assert_eq!(count_tokens("a,b"), 3);
        assert_eq!(count_tokens("Zürich"), 2);
        assert_eq!(count_tokens("€10"), 2);
    }

    #[test]
    fn truncation_cuts_at_token_boundary() {
        let text = "hello world, again";
        // hell|o world|, again -> hell o worl d , agai n
        assert_eq!(truncate_to_tokens(text, 2), "hello");
        assert_eq!(truncate_to_tokens(text, 1), "hell");
        assert_eq!(truncate_to_tokens(text, 0), "");
        assert_eq!(truncate_to_tokens(text, 100), text);
        assert_eq!(count_tokens(truncate_to_tokens(text, 5)), 5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn concatenation_bounds(a in "\\PC{0,60}", b in "\\PC{0,60}") {
            let joined = format!("{a}{b}");
            let (ca, cb, cj) = (count_tokens(&a), count_tokens(&b), count_tokens(&joined));
            prop_assert!(cj >= ca.max(cb));
            prop_assert!(cj <= ca + cb + 1);
        }

        #[test]
        fn truncate_respects_limit(text in "\\PC{0,200}", n in 0usize..80) {
            let cut = truncate_to_tokens(&text, n);
            prop_assert!(text.starts_with(cut));
            prop_assert!(count_tokens(cut) <= n);
            if count_tokens(&text) >= n {
                prop_assert_eq!(count_tokens(cut), n);
            }
        }
    }
}
