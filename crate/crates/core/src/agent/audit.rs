//! JSON-lines audit trail of every model exchange and gate verdict.
//!
//! Fields whose names start with `wall_` hold wall-clock measurements and are
//! the only part of a log that may differ between two scripted runs.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    Exchange,
    ProviderError,
    Gate,
    Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub scope: String,
    pub kind: AuditKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsed: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_latency_s: Option<f64>,
}

impl AuditEntry {
    pub fn new(kind: AuditKind) -> Self {
        Self {
            seq: 0,
            scope: String::new(),
            kind,
            template: None,
            system: None,
            user: None,
            reply: None,
            parsed: None,
            verdict: None,
            detail: None,
            wall_latency_s: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AuditLog {
    scope: String,
    entries: Vec<AuditEntry>,
}

impl AuditLog {
    pub fn new(scope: impl Into<String>) -> Self {
        Self {
            scope: scope.into(),
            entries: Vec::new(),
        }
    }

    /// Entries appended from now on carry this scope.
    pub fn set_scope(&mut self, scope: impl Into<String>) {
        self.scope = scope.into();
    }

    pub fn push(&mut self, mut entry: AuditEntry) {
        entry.seq = self.entries.len() as u64;
        entry.scope.clone_from(&self.scope);
        self.entries.push(entry);
    }

    pub fn last_mut(&mut self) -> Option<&mut AuditEntry> {
        self.entries.last_mut()
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Moves every entry of `other` to the end of this log, renumbering.
    pub fn append(&mut self, other: AuditLog) {
        for mut e in other.entries {
            e.seq = self.entries.len() as u64;
            self.entries.push(e);
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("serde_json emits utf-8")
    }
}

/// Removes every object key starting with `wall_`, recursively.
pub fn strip_wall_fields(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.retain(|k, _| !k.starts_with("wall_"));
            map.values_mut().for_each(strip_wall_fields);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_fields),
        _ => {}
    }
}

/// A JSON-lines (or single JSON) text with wall-clock fields removed, for
/// run-to-run comparisons. Lines that are not JSON pass through unchanged.
pub fn normalize_json_lines(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        match serde_json::from_str::<Value>(line) {
            Ok(mut v) => {
                strip_wall_fields(&mut v);
                out.push_str(&v.to_string());
            }
            Err(_) => out.push_str(line),
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_and_scope() {
        let mut log = AuditLog::new("a");
        log.push(AuditEntry::new(AuditKind::Exchange));
        log.set_scope("b");
        log.push(AuditEntry::new(AuditKind::Gate));
        assert_eq!(log.entries()[1].seq, 1);
        assert_eq!(log.entries()[1].scope, "b");
        assert_eq!(log.to_jsonl().lines().count(), 2);
    }

    #[test]
    fn wall_fields_are_stripped() {
        let mut e = AuditEntry::new(AuditKind::Exchange);
        e.wall_latency_s = Some(0.123);
        let mut log = AuditLog::new("x");
        log.push(e.clone());
        let mut other = AuditLog::new("x");
        e.wall_latency_s = Some(9.0);
        other.push(e);
        assert_ne!(log.to_jsonl(), other.to_jsonl());
        assert_eq!(normalize_json_lines(&log.to_jsonl()), normalize_json_lines(&other.to_jsonl()));
        let mut nested = serde_json::json!({"a": [{"wall_x": 1, "y": 2}]});
        strip_wall_fields(&mut nested);
        assert_eq!(nested, serde_json::json!({"a": [{"y": 2}]}));
    }
}
