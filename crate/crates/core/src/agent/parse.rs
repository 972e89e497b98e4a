//! Extraction of numeric lists, booleans and state paths from free-form
//! model replies. When a reply contains several candidates the last one
//! wins, since models tend to reason first and answer last.

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

use crate::fsm::StateId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("could not parse {expected} from reply")]
pub struct ParseFailure {
    pub expected: String,
    /// The reply exactly as received.
    pub raw: String,
}

impl ParseFailure {
    fn new(expected: impl Into<String>, raw: &str) -> Self {
        Self {
            expected: expected.into(),
            raw: raw.to_string(),
        }
    }
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$").expect("valid regex"))
}

fn bool_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(true|false)\b").expect("valid regex"))
}

/// Contents of every innermost `[...]` group, in order of appearance.
fn bracket_groups(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match c {
            '[' => open = Some(i + 1),
            ']' => {
                if let Some(s) = open.take() {
                    out.push(&text[s..i]);
                }
            }
            _ => {}
        }
    }
    out
}

fn tokens(group: &str) -> Vec<&str> {
    let trimmed = group.trim();
    if trimmed.is_empty() {
        return Vec::new();
    }
    trimmed.split(',').map(str::trim).collect()
}

fn numeric_list(group: &str) -> Option<Vec<f64>> {
    tokens(group)
        .into_iter()
        .map(|t| {
            if number_re().is_match(t) {
                t.parse::<f64>().ok().filter(|v| v.is_finite())
            } else {
                None
            }
        })
        .collect()
}

/// Every bracketed list whose entries are all plain numbers.
pub fn numeric_lists(text: &str) -> Vec<Vec<f64>> {
    bracket_groups(text).into_iter().filter_map(numeric_list).collect()
}

/// The last bracketed numeric list of exactly `expected_len` entries.
pub fn parse_float_array(text: &str, expected_len: usize) -> Result<Vec<f64>, ParseFailure> {
    numeric_lists(text)
        .into_iter()
        .rev()
        .find(|v| v.len() == expected_len)
        .ok_or_else(|| ParseFailure::new(format!("a list of {expected_len} numbers"), text))
}

/// The last standalone `true`/`false` token, case-insensitive.
pub fn parse_bool(text: &str) -> Result<bool, ParseFailure> {
    bool_re()
        .find_iter(text)
        .last()
        .map(|m| m.as_str().eq_ignore_ascii_case("true"))
        .ok_or_else(|| ParseFailure::new("True or False", text))
}

/// The last non-empty bracketed list of non-negative integers.
pub fn parse_path(text: &str) -> Result<Vec<StateId>, ParseFailure> {
    bracket_groups(text)
        .into_iter()
        .rev()
        .filter_map(|g| {
            let ts = tokens(g);
            if ts.is_empty() {
                return None;
            }
            ts.into_iter()
                .map(|t| {
                    let t = t.strip_prefix('+').unwrap_or(t);
                    if !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit()) {
                        t.parse::<StateId>().ok()
                    } else {
                        None
                    }
                })
                .collect::<Option<Vec<_>>>()
        })
        .next()
        .ok_or_else(|| ParseFailure::new("a list of state ids", text))
}

/// Renders numbers so that [`parse_float_array`] recovers them exactly.
pub fn render_float_array(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
    format!("[{}]", parts.join(", "))
}
