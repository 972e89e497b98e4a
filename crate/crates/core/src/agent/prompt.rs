//! Role/goal/task prompt templates with `{name}` placeholders.
//!
//! `{{` and `}}` render as literal braces. Substituted values are never
//! rescanned, so a bound value may itself contain braces (graph text does).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::CompletionRequest;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("unbound placeholder `{0}`")]
    UnboundPlaceholder(String),
    #[error("malformed template `{name}`: {message}")]
    Malformed { name: String, message: String },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("cannot read templates from {path}: {message}")]
    Io { path: String, message: String },
}

pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub name: String,
    pub agent: String,
    pub role: String,
    pub goal: String,
    #[serde(default)]
    pub backstory: String,
    pub task: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub note: Option<String>,
    pub expected_output: String,
}

/// A rendered template, split the way chat endpoints expect it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template: String,
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    /// Appends validator feedback to the user text.
    pub fn with_feedback(mut self, feedback: &str) -> Self {
        if !feedback.is_empty() {
            self.user.push_str("\n\nFeedback on your previous answer: ");
            self.user.push_str(feedback);
        }
        self
    }

    pub fn request(&self) -> CompletionRequest {
        CompletionRequest::new(self.system.clone(), self.user.clone())
    }
}

enum Piece<'a> {
    Text(&'a str),
    Hole(&'a str),
}

fn scan(text: &str) -> Result<Vec<Piece<'_>>, String> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut lit = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Piece::Text(&text[lit..=i]));
                i += 2;
                lit = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Piece::Text(&text[lit..=i]));
                i += 2;
                lit = i;
            }
            b'{' => {
                let end = text[i + 1..]
                    .find('}')
                    .map(|k| i + 1 + k)
                    .ok_or_else(|| format!("unclosed `{{` at byte {i}"))?;
                let name = &text[i + 1..end];
                let ok = !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_');
                if !ok {
                    return Err(format!("invalid placeholder `{{{name}}}` at byte {i}"));
                }
                out.push(Piece::Text(&text[lit..i]));
                out.push(Piece::Hole(name));
                i = end + 1;
                lit = i;
            }
            b'}' => return Err(format!("stray `}}` at byte {i}")),
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&text[lit..]));
    Ok(out)
}

/// Substitutes every placeholder in `text`.
pub fn render_text(text: &str, bindings: &Bindings) -> Result<String, PromptError> {
    let pieces = scan(text).map_err(|message| PromptError::Malformed {
        name: String::new(),
        message,
    })?;
    let mut out = String::with_capacity(text.len());
    for p in pieces {
        match p {
            Piece::Text(t) => out.push_str(t),
            Piece::Hole(name) => out.push_str(
                bindings
                    .get(name)
                    .ok_or_else(|| PromptError::UnboundPlaceholder(name.to_string()))?,
            ),
        }
    }
    Ok(out)
}

impl PromptTemplate {
    fn fields(&self) -> impl Iterator<Item = &str> {
        [
            self.role.as_str(),
            &self.goal,
            &self.backstory,
            &self.task,
            &self.description,
            &self.expected_output,
        ]
        .into_iter()
        .chain(self.note.as_deref())
    }

    /// Checks placeholder syntax in every field.
    pub fn validate(&self) -> Result<(), PromptError> {
        for f in self.fields() {
            scan(f).map_err(|message| PromptError::Malformed {
                name: self.name.clone(),
                message,
            })?;
        }
        Ok(())
    }

    /// Every placeholder name used anywhere in the template.
    pub fn placeholders(&self) -> BTreeSet<String> {
        self.fields()
            .filter_map(|f| scan(f).ok())
            .flatten()
            .filter_map(|p| match p {
                Piece::Hole(n) => Some(n.to_string()),
                Piece::Text(_) => None,
            })
            .collect()
    }

    pub fn render(&self, bindings: &Bindings) -> Result<RenderedPrompt, PromptError> {
        let r = |t: &str| {
            render_text(t, bindings).map_err(|e| match e {
                PromptError::Malformed { message, .. } => PromptError::Malformed {
                    name: self.name.clone(),
                    message,
                },
                other => other,
            })
        };
        let mut system = format!("Role: {}\nGoal: {}", r(&self.role)?.trim(), r(&self.goal)?.trim());
        let backstory = r(&self.backstory)?;
        if !backstory.trim().is_empty() {
            system.push_str("\nBackstory: ");
            system.push_str(backstory.trim());
        }
        let mut user = format!("Task: {}", r(&self.task)?.trim());
        let description = r(&self.description)?;
        if !description.trim().is_empty() {
            user.push_str("\n\n");
            user.push_str(description.trim());
        }
        if let Some(note) = &self.note {
            user.push_str("\n\nNote: ");
            user.push_str(r(note)?.trim());
        }
        user.push_str("\n\nExpected output: ");
        user.push_str(r(&self.expected_output)?.trim());
        Ok(RenderedPrompt {
            template: self.name.clone(),
            system,
            user,
        })
    }
}

/// Formats a number with six significant digits, no exponent.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (5 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

const BUNDLED: [(&str, &str); 8] = [
    ("traversal_task", include_str!("../../assets/prompts/traversal_task.toml")),
    ("operator_task", include_str!("../../assets/prompts/operator_task.toml")),
    ("power_validation_task", include_str!("../../assets/prompts/power_validation_task.toml")),
    ("power_reprompting_task", include_str!("../../assets/prompts/power_reprompting_task.toml")),
    ("temp_reprompting_task_1", include_str!("../../assets/prompts/temp_reprompting_task_1.toml")),
    ("temp_reprompting_task_2", include_str!("../../assets/prompts/temp_reprompting_task_2.toml")),
    ("temp_reprompting_task_3", include_str!("../../assets/prompts/temp_reprompting_task_3.toml")),
    ("temp_validation", include_str!("../../assets/prompts/temp_validation.toml")),
];

/// Immutable set of templates keyed by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateStore {
    templates: BTreeMap<String, PromptTemplate>,
}

fn parse_template(name: &str, text: &str) -> Result<PromptTemplate, PromptError> {
    let t: PromptTemplate = toml::from_str(text).map_err(|e| PromptError::Malformed {
        name: name.to_string(),
        message: e.to_string(),
    })?;
    t.validate()?;
    Ok(t)
}

impl TemplateStore {
    /// The templates shipped with the crate.
    pub fn bundled() -> Self {
        let templates = BUNDLED
            .iter()
            .map(|(name, text)| {
                let t = parse_template(name, text).expect("bundled templates are well-formed");
                (t.name.clone(), t)
            })
            .collect();
        Self { templates }
    }

    /// Bundled templates, overridden by any `*.toml` file in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let io = |e: std::io::Error| PromptError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        let mut store = Self::bundled();
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        for p in paths {
            let text = std::fs::read_to_string(&p).map_err(io)?;
            let t = parse_template(&p.display().to_string(), &text)?;
            store.templates.insert(t.name.clone(), t);
        }
        Ok(store)
    }

    pub fn get(&self, name: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(name)
            .ok_or_else(|| PromptError::UnknownTemplate(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn render(&self, name: &str, bindings: &Bindings) -> Result<RenderedPrompt, PromptError> {
        self.get(name)?.render(bindings)
    }
}

impl Default for TemplateStore {
    fn default() -> Self {
        Self::bundled()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(pairs: &[(&str, &str)]) -> Bindings {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn traversal_prompt_mentions_states() {
        let store = TemplateStore::bundled();
        let p = store
            .render(
                "traversal_task",
                &b(&[
                    ("target_state", "3"),
                    ("current_state", "0"),
                    ("graph", "{0: [1], 1: [3], 2: [], 3: [0]}"),
                    ("recommendation", ""),
                ]),
            )
            .unwrap();
        assert!(p.user.contains("Can state 3 be reached from 0"));
        assert!(p.user.contains("{0: [1], 1: [3], 2: [], 3: [0]}"));
        assert!(p.system.starts_with("Role: "));
    }

    #[test]
    fn placeholder_free_text_is_verbatim() {
        assert_eq!(render_text("plain text, no holes", &Bindings::new()).unwrap(), "plain text, no holes");
        assert_eq!(render_text("a {{literal}} b", &Bindings::new()).unwrap(), "a {literal} b");
    }

    #[test]
    fn missing_binding_is_named() {
        let err = render_text("target {t_avg} K", &Bindings::new()).unwrap_err();
        assert_eq!(err, PromptError::UnboundPlaceholder("t_avg".into()));
    }

    #[test]
    fn values_are_not_rescanned() {
        let out = render_text("{a}", &b(&[("a", "{b}")])).unwrap();
        assert_eq!(out, "{b}");
    }

    #[test]
    fn malformed_templates() {
        assert!(matches!(render_text("{open", &Bindings::new()), Err(PromptError::Malformed { .. })));
        assert!(matches!(render_text("x } y", &Bindings::new()), Err(PromptError::Malformed { .. })));
        assert!(matches!(render_text("{a b}", &Bindings::new()), Err(PromptError::Malformed { .. })));
    }

    #[test]
    fn bundled_store_is_complete() {
        let store = TemplateStore::bundled();
        let names: Vec<_> = store.names().collect();
        assert_eq!(names.len(), 8);
        let op = store.get("operator_task").unwrap();
        let holes = op.placeholders();
        for h in ["t_avg", "q1", "q2", "t1", "t2", "curr_t_avg", "lo_q", "hi_q"] {
            assert!(holes.contains(h), "{h}");
        }
        assert!(store.get("nope").is_err());
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(306.15), "306.150");
        assert_eq!(sig6(0.3), "0.300000");
        assert_eq!(sig6(1.2e-3), "0.00120000");
        assert_eq!(sig6(999.9996), "1000.00");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(-2.5), "-2.50000");
    }

    #[test]
    fn feedback_is_appended() {
        let p = RenderedPrompt {
            template: "t".into(),
            system: "s".into(),
            user: "u".into(),
        };
        assert_eq!(p.clone().with_feedback("").user, "u");
        assert!(p.with_feedback("too hot").user.ends_with("too hot"));
    }
}
