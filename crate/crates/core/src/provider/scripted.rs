//! Deterministic replay provider.
//!
//! A script is an ordered list of rules. Each rule has an optional regex
//! that must match the prompt, a reply, and a `repeat` flag. A request is
//! answered by the first rule that matches and is not yet consumed;
//! non-repeating rules are consumed on use. Keyed rules let one script serve
//! several agent roles in interleaved order.

use std::io::BufRead;
use std::sync::Mutex;
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CompletionProvider, CompletionRequest, CompletionResponse, ProviderError};

/// One line of a JSON-lines script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default, rename = "match", skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    pub reply: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub repeat: bool,
}

impl ScriptRule {
    pub fn reply(text: impl Into<String>) -> Self {
        Self {
            pattern: None,
            reply: text.into(),
            repeat: false,
        }
    }

    pub fn keyed(pattern: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            pattern: Some(pattern.into()),
            reply: text.into(),
            repeat: false,
        }
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }
}

/// Reads script rules from JSON lines. Blank lines and lines starting with
/// `#` are skipped; a line may also be a bare JSON string (unkeyed reply).
pub fn parse_script<R: BufRead>(input: R) -> Result<Vec<ScriptRule>, ProviderError> {
    let mut rules = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ProviderError::InvalidConfig(e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rule = if trimmed.starts_with('"') {
            serde_json::from_str::<String>(trimmed).map(ScriptRule::reply)
        } else {
            serde_json::from_str::<ScriptRule>(trimmed)
        }
        .map_err(|e| ProviderError::InvalidConfig(format!("script line {}: {e}", n + 1)))?;
        rules.push(rule);
    }
    Ok(rules)
}

#[derive(Clone)]
struct Slot {
    regex: Option<Regex>,
    reply: String,
    repeat: bool,
    used: bool,
}

pub struct ScriptedProvider {
    label: String,
    slots: Mutex<Vec<Slot>>,
}

impl std::fmt::Debug for ScriptedProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScriptedProvider").field("label", &self.label).finish()
    }
}

impl ScriptedProvider {
    pub fn new(rules: Vec<ScriptRule>) -> Result<Self, ProviderError> {
        let slots = rules
            .into_iter()
            .map(|r| {
                let regex = r
                    .pattern
                    .as_deref()
                    .map(Regex::new)
                    .transpose()
                    .map_err(|e| ProviderError::InvalidConfig(format!("bad script pattern: {e}")))?;
                Ok(Slot {
                    regex,
                    reply: r.reply,
                    repeat: r.repeat,
                    used: false,
                })
            })
            .collect::<Result<Vec<_>, ProviderError>>()?;
        Ok(Self {
            label: "scripted".into(),
            slots: Mutex::new(slots),
        })
    }

    /// A copy with every rule unconsumed. Compiled patterns are shared, so
    /// this is cheap even for large scripts.
    pub fn fresh(&self) -> Self {
        let slots = self
            .slots
            .lock()
            .expect("script lock poisoned")
            .iter()
            .map(|s| Slot { used: false, ..s.clone() })
            .collect();
        Self {
            label: self.label.clone(),
            slots: Mutex::new(slots),
        }
    }

    /// Plain queue of replies, answered in order regardless of prompt.
    pub fn from_replies<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(replies.into_iter().map(ScriptRule::reply).collect()).expect("no patterns")
    }

    /// Parses a JSON-lines script; see [`parse_script`].
    pub fn from_jsonl<R: BufRead>(input: R) -> Result<Self, ProviderError> {
        Self::new(parse_script(input)?)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Pops the reply for `prompt` under the first-unconsumed-match rule.
    pub fn next_scripted_response(&self, prompt: &str) -> Result<String, ProviderError> {
        let mut slots = self.slots.lock().expect("script lock poisoned");
        let slot = slots
            .iter_mut()
            .filter(|s| s.repeat || !s.used)
            .find(|s| s.regex.as_ref().is_none_or(|r| r.is_match(prompt)))
            .ok_or(ProviderError::ScriptExhausted)?;
        slot.used = true;
        Ok(slot.reply.clone())
    }

    /// Rules that have not been consumed yet (repeating rules never are).
    pub fn remaining(&self) -> usize {
        self.slots
            .lock()
            .expect("script lock poisoned")
            .iter()
            .filter(|s| s.repeat || !s.used)
            .count()
    }
}

impl CompletionProvider for ScriptedProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        request.validate()?;
        let started = Instant::now();
        let text = self.next_scripted_response(&request.prompt_text())?;
        Ok(CompletionResponse {
            text,
            latency_s: started.elapsed().as_secs_f64(),
            usage: None,
            retries: 0,
        })
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}
