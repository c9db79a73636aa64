//! Response parsing for chat completions.

use serde_json::Value;

use crate::survey::Choice;

/// Pulls the completion text out of a chat-style JSON response. Bodies that
/// are not JSON are treated as the text itself.
pub fn completion_text(body: &str) -> Option<String> {
    let Ok(v) = serde_json::from_str::<Value>(body) else {
        return Some(body.to_string());
    };
    let candidates = [
        v.pointer("/choices/0/message/content"),
        v.pointer("/choices/0/text"),
        v.pointer("/content/0/text"),
        v.pointer("/message/content"),
        v.get("output_text"),
        v.get("text"),
        v.get("completion"),
    ];
    let found = candidates
        .into_iter()
        .flatten()
        .find_map(|c| c.as_str().map(str::to_string));
    found
}

/// Finds the last `Answer: A|B` marker; the rationale is the text before it.
pub fn parse_choice(text: &str) -> Option<(Choice, String)> {
    let lower = text.to_ascii_lowercase();
    let mut end = lower.len();
    while let Some(pos) = lower[..end].rfind("answer") {
        let rest = &text[pos + "answer".len()..];
        let rest = rest.trim_start_matches(['*', ' ', '\t']);
        if let Some(rest) = rest.strip_prefix(':') {
            let rest = rest.trim_start_matches(['*', ' ', '\t', '"', '\'', '(', '[']);
            let rest = rest
                .strip_prefix("Option ")
                .or_else(|| rest.strip_prefix("option "))
                .unwrap_or(rest);
            let mut chars = rest.chars();
            let choice = match chars.next() {
                Some('A') => Some(Choice::A),
                Some('B') => Some(Choice::B),
                _ => None,
            };
            let boundary = chars.next().is_none_or(|c| !c.is_alphanumeric());
            if let (Some(choice), true) = (choice, boundary) {
                let rationale = text[..pos].trim().trim_end_matches(['*', '#']).trim().to_string();
                return Some((choice, rationale));
            }
        }
        end = pos;
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub enum YieldParse {
    Value(f64),
    OutOfRange(f64),
    NoNumber,
}

/// First number on the final non-empty line, required to lie in `[0, 100]`.
pub fn parse_yield(text: &str) -> YieldParse {
    let Some(line) = text.lines().rev().find(|l| !l.trim().is_empty()) else {
        return YieldParse::NoNumber;
    };
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let starts_number = bytes[i].is_ascii_digit()
            || (bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit));
        if starts_number {
            let negative = i > 0 && bytes[i - 1] == b'-';
            let mut j = i;
            let mut seen_dot = false;
            while j < bytes.len() && (bytes[j].is_ascii_digit() || (bytes[j] == b'.' && !seen_dot)) {
                seen_dot |= bytes[j] == b'.';
                j += 1;
            }
            let s = line[i..j].trim_end_matches('.');
            let Ok(mut v) = s.parse::<f64>() else {
                return YieldParse::NoNumber;
            };
            if negative {
                v = -v;
            }
            return if (0.0..=100.0).contains(&v) {
                YieldParse::Value(v)
            } else {
                YieldParse::OutOfRange(v)
            };
        }
        i += 1;
    }
    YieldParse::NoNumber
}
