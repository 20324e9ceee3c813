//! Tokenization, case handling and optional text cleaning.
//!
//! A token is a maximal run of alphanumeric characters. Everything else
//! (whitespace, punctuation, apostrophes) delimits tokens, so a lexicon
//! surface only ever matches an entire token.

use std::sync::OnceLock;

use regex::Regex;

/// Byte span of one token inside the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// Token spans in order of appearance.
pub fn token_spans(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            spans.push(Span { start: s, end: i });
        }
    }
    if let Some(s) = start {
        spans.push(Span {
            start: s,
            end: text.len(),
        });
    }
    spans
}

/// Lowercased tokens in order of appearance.
pub fn tokens(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|s| text[s.start..s.end].to_lowercase())
        .collect()
}

/// True when `word` would survive tokenization as exactly one token.
pub fn is_single_token(word: &str) -> bool {
    !word.is_empty() && word.chars().all(char::is_alphanumeric)
}

/// Renders `replacement` (lowercase) with the case pattern of `original`.
///
/// All-caps originals give an all-caps replacement, a capitalized original
/// gives a capitalized replacement, anything else stays lowercase.
pub fn match_case(original: &str, replacement: &str) -> String {
    let has_upper = original.chars().any(char::is_uppercase);
    let has_lower = original.chars().any(char::is_lowercase);
    if has_upper && !has_lower && original.chars().count() > 1 {
        return replacement.to_uppercase();
    }
    match original.chars().next() {
        Some(first) if first.is_uppercase() => {
            let mut chars = replacement.chars();
            match chars.next() {
                Some(r) => r.to_uppercase().chain(chars).collect(),
                None => String::new(),
            }
        }
        _ => replacement.to_string(),
    }
}

/// Rewrites every token for which `replace` returns a value, keeping all
/// other characters byte-for-byte.
pub fn rewrite_tokens<F>(text: &str, mut replace: F) -> String
where
    F: FnMut(usize, &str) -> Option<String>,
{
    let mut out = String::with_capacity(text.len() + 16);
    let mut cursor = 0;
    for (index, span) in token_spans(text).into_iter().enumerate() {
        let token = &text[span.start..span.end];
        if let Some(new) = replace(index, token) {
            out.push_str(&text[cursor..span.start]);
            out.push_str(&new);
            cursor = span.end;
        }
    }
    out.push_str(&text[cursor..]);
    out
}

const CONTRACTIONS: &[(&str, &str)] = &[
    ("won't", "will not"),
    ("can't", "cannot"),
    ("shan't", "shall not"),
    ("ain't", "is not"),
    ("let's", "let us"),
    ("n't", " not"),
    ("'re", " are"),
    ("'m", " am"),
    ("'ll", " will"),
    ("'ve", " have"),
    ("'d", " would"),
];

fn url_pattern() -> &'static Regex {
    static URL: OnceLock<Regex> = OnceLock::new();
    URL.get_or_init(|| Regex::new(r"(?i)\b(?:https?://|www\.)\S+").expect("valid regex"))
}

/// Cleaning applied at ingestion when requested: URL and non-ASCII removal,
/// lowercasing, contraction expansion and spacing around punctuation.
pub fn normalize(text: &str) -> String {
    let no_urls = url_pattern().replace_all(text, " ");
    let mut s: String = no_urls
        .chars()
        .filter(char::is_ascii)
        .collect::<String>()
        .to_lowercase()
        .replace('\u{2019}', "'");
    for (from, to) in CONTRACTIONS {
        s = s.replace(from, to);
    }
    let mut spaced = String::with_capacity(s.len() + 16);
    for c in s.chars() {
        if c.is_ascii_punctuation() && c != '\'' {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}
