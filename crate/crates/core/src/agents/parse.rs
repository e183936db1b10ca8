use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use super::Label;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no recognizable answer in completion: {0:?}")]
    NoAnswer(String),
    #[error("no yes/no verdict in completion: {0:?}")]
    NoVerdict(String),
    #[error("empty keyword query")]
    EmptyKeywords,
}

const QUOTES: &str = r#"['"`‘’“”]"#;

static ANSWER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?i)answer\s*:\s*\[?\s*{QUOTES}?\s*(stimulate|inhibit|no[_ ]relation)\s*{QUOTES}?\s*\]?")).unwrap()
});

static VERDICT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i)answer\s*:\s*\[?\s*{QUOTES}?\s*(yes|no)\b")).unwrap());

static ANSWER_MARK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)answer\s*:").unwrap());
static REASONING_MARK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)reasoning\s*:").unwrap());
static KEYWORD_LABEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*(keywords?|query|search query)\s*:\s*").unwrap());

/// Final `Answer:` label. Brackets and quotes are optional, case is ignored,
/// and `no relation` is accepted for `no_relation`.
pub fn parse_answer(raw: &str) -> Result<Label, ParseError> {
    let caps = ANSWER.captures_iter(raw).last().ok_or_else(|| ParseError::NoAnswer(raw.to_string()))?;
    caps[1].parse()
}

/// Final `Answer:` yes/no, with the same tolerance as [`parse_answer`].
pub fn parse_verdict(raw: &str) -> Result<bool, ParseError> {
    let caps = VERDICT.captures_iter(raw).last().ok_or_else(|| ParseError::NoVerdict(raw.to_string()))?;
    Ok(caps[1].eq_ignore_ascii_case("yes"))
}

/// Reasoning steps between `Reasoning:` and the final `Answer:`.
///
/// Steps are split on ` | ` when present, otherwise at sentence ends.
pub fn parse_reasoning(raw: &str) -> Vec<String> {
    let Some(start) = REASONING_MARK.find(raw) else {
        return Vec::new();
    };
    let body = &raw[start.end()..];
    let body = match ANSWER_MARK.find_iter(body).last() {
        Some(m) => &body[..m.start()],
        None => body,
    };
    let pieces: Vec<&str> = if body.contains(" | ") { body.split(" | ").collect() } else { split_sentences(body) };
    pieces.into_iter().map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((_, c)) = chars.next() {
        if matches!(c, '.' | '?' | '!') {
            if let Some(&(j, next)) = chars.peek() {
                if next.is_whitespace() {
                    out.push(&text[start..j]);
                    start = j;
                }
            }
        }
    }
    out.push(&text[start..]);
    out
}

/// Keyword query from an enrichment completion: leading labels and
/// surrounding quotes stripped, whitespace collapsed.
pub fn parse_keywords(raw: &str) -> Result<String, ParseError> {
    let mut s = raw.trim();
    loop {
        let before = s;
        if let Some(m) = KEYWORD_LABEL.find(s) {
            s = s[m.end()..].trim();
        }
        s = s.trim_matches(|c: char| "\"'`‘’“”".contains(c)).trim();
        if s == before {
            break;
        }
    }
    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.is_empty() {
        Err(ParseError::EmptyKeywords)
    } else {
        Ok(collapsed)
    }
}
