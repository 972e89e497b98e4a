//! Recovery planning over an [`Fsm`]: propose a path, execute it against the
//! machine, and reprompt with structured feedback until a valid path comes
//! back or the budget runs out.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::audit::{AuditEntry, AuditKind, AuditLog};
use super::parse::{parse_bool, parse_path};
use super::prompt::{Bindings, PromptError, TemplateStore};
use crate::fsm::{Fsm, FsmError, PathPlan, StateId, TraversalReport};
use crate::metrics::FsmInstanceSummary;
use crate::provider::{CompletionProvider, ProviderError, ScriptRule};

pub const DEFAULT_PLAN_BUDGET: u32 = 5;
pub const TRAVERSAL_TEMPLATE: &str = "traversal_task";

/// Why a proposed path was rejected, in the order the checks run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Rejection {
    Unparseable,
    UnknownState { state: StateId },
    WrongStart { expected: StateId, got: StateId },
    InvalidTransition { index: usize, from: StateId, to: StateId },
    WrongGoal { expected: StateId, got: StateId },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Unparseable => f.write_str("no list of states was found in the answer"),
            Rejection::UnknownState { state } => write!(f, "state {state} does not exist"),
            Rejection::WrongStart { expected, got } => {
                write!(f, "the path starts at {got} instead of {expected}")
            }
            Rejection::InvalidTransition { index, from, to } => write!(
                f,
                "transition {from} -> {to} at position {index} is not in the adjacency list"
            ),
            Rejection::WrongGoal { expected, got } => {
                write!(f, "the path ends at {got} instead of {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanAttempt {
    pub reply: String,
    pub proposed: Option<PathPlan>,
    /// The reachability answer, when the reply contained one.
    pub claimed_reachable: Option<bool>,
    pub report: Option<TraversalReport>,
    pub rejection: Option<Rejection>,
    pub wall_latency_s: f64,
}

impl PlanAttempt {
    pub fn accepted(&self) -> bool {
        self.rejection.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub start: StateId,
    pub goal: StateId,
    pub success: bool,
    /// Last path proposed, valid or not.
    pub final_path: Option<PathPlan>,
    pub attempts: Vec<PlanAttempt>,
    pub reprompts_used: u32,
}

impl PlanOutcome {
    pub fn wall_seconds(&self) -> f64 {
        self.attempts.iter().map(|a| a.wall_latency_s).sum()
    }

    pub fn first_attempt_valid(&self) -> bool {
        self.attempts.first().is_some_and(PlanAttempt::accepted)
    }

    /// Benchmark summary; `optimal` is the oracle's shortest path.
    pub fn summarize(&self, id: impl Into<String>, optimal: Option<&PathPlan>) -> FsmInstanceSummary {
        FsmInstanceSummary {
            id: id.into(),
            first_attempt_valid: self.first_attempt_valid(),
            solved: self.success,
            reprompts: self.reprompts_used,
            found_len: self
                .final_path
                .as_ref()
                .filter(|_| self.success)
                .map(PathPlan::len_transitions),
            optimal_len: optimal.map(PathPlan::len_transitions),
            seconds: self.wall_seconds(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("provider failed after {} attempts: {error}", partial.attempts.len())]
    Provider { error: ProviderError, partial: Box<PlanOutcome> },
    #[error(transparent)]
    Fsm(#[from] FsmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Checks a reply against the machine and the task.
pub fn judge_reply(fsm: &Fsm, start: StateId, goal: StateId, reply: &str) -> (Option<PathPlan>, Option<TraversalReport>, Option<Rejection>) {
    let Some(path) = parse_path(reply).ok().and_then(PathPlan::new) else {
        return (None, None, Some(Rejection::Unparseable));
    };
    if let Some(&state) = path.states().iter().find(|&&s| s >= fsm.n_nodes()) {
        return (Some(path), None, Some(Rejection::UnknownState { state }));
    }
    let report = fsm.traverse(&path).expect("ids checked above");
    let rejection = if path.start() != start {
        Some(Rejection::WrongStart {
            expected: start,
            got: path.start(),
        })
    } else if let Some(index) = report.first_invalid_index {
        let s = path.states();
        Some(Rejection::InvalidTransition {
            index,
            from: s[index],
            to: s[index + 1],
        })
    } else if path.end() != goal {
        Some(Rejection::WrongGoal {
            expected: goal,
            got: path.end(),
        })
    } else {
        None
    };
    (Some(path), Some(report), rejection)
}

/// Feedback text for the next attempt. Lists every distinct earlier path
/// verbatim so the model can avoid repeating them.
pub fn recommendation(rejection: &Rejection, previous: &[PathPlan]) -> String {
    let mut seen: Vec<&PathPlan> = Vec::new();
    for p in previous {
        if !seen.contains(&p) {
            seen.push(p);
        }
    }
    let mut text = format!("Your previous answer was rejected: {rejection}.");
    if !seen.is_empty() {
        let list: Vec<String> = seen.iter().map(|p| p.to_string()).collect();
        text.push_str(&format!(" Avoid these previously explored paths: {}.", list.join(", ")));
    }
    text.push_str(" Propose a different sequence that uses only listed transitions.");
    text
}

/// Drives the propose/execute/reprompt loop.
pub struct Planner<'a> {
    pub provider: &'a dyn CompletionProvider,
    pub templates: &'a TemplateStore,
    pub budget: u32,
}

impl<'a> Planner<'a> {
    pub fn new(provider: &'a dyn CompletionProvider, templates: &'a TemplateStore) -> Self {
        Self {
            provider,
            templates,
            budget: DEFAULT_PLAN_BUDGET,
        }
    }

    pub fn with_budget(mut self, budget: u32) -> Self {
        self.budget = budget;
        self
    }

    pub fn plan(&self, fsm: &Fsm, start: StateId, goal: StateId, audit: &mut AuditLog) -> Result<PlanOutcome, PlanError> {
        for s in [start, goal] {
            if s >= fsm.n_nodes() {
                return Err(FsmError::UnknownState {
                    state: s,
                    n_nodes: fsm.n_nodes(),
                }
                .into());
            }
        }
        let graph = fsm.encode_as_dict_text();
        let mut outcome = PlanOutcome {
            start,
            goal,
            success: false,
            final_path: None,
            attempts: Vec::new(),
            reprompts_used: 0,
        };
        let mut proposed: Vec<PathPlan> = Vec::new();
        let mut advice = String::new();

        for attempt in 0..=self.budget {
            let bindings: Bindings = [
                ("target_state", goal.to_string()),
                ("current_state", start.to_string()),
                ("graph", graph.clone()),
                ("recommendation", advice.clone()),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
            let prompt = self.templates.render(TRAVERSAL_TEMPLATE, &bindings)?;
            let mut entry = AuditEntry::new(AuditKind::Exchange);
            entry.template = Some(prompt.template.clone());
            entry.system = Some(prompt.system.clone());
            entry.user = Some(prompt.user.clone());

            let response = match self.provider.complete(&prompt.request()) {
                Ok(r) => r,
                Err(error) => {
                    entry.kind = AuditKind::ProviderError;
                    entry.detail = Some(error.to_string());
                    audit.push(entry);
                    return Err(PlanError::Provider {
                        error,
                        partial: Box::new(outcome),
                    });
                }
            };
            let (path, report, rejection) = judge_reply(fsm, start, goal, &response.text);
            let claimed = parse_bool(&response.text).ok();
            entry.reply = Some(response.text.clone());
            entry.parsed = path.as_ref().map(|p| serde_json::json!(p.states()));
            entry.verdict = Some(rejection.is_none());
            entry.detail = rejection.as_ref().map(ToString::to_string);
            entry.wall_latency_s = Some(response.latency_s);
            audit.push(entry);

            outcome.reprompts_used = attempt;
            if let Some(p) = &path {
                outcome.final_path = Some(p.clone());
                proposed.push(p.clone());
            }
            let done = rejection.is_none();
            if let Some(r) = &rejection {
                advice = recommendation(r, &proposed);
            }
            outcome.attempts.push(PlanAttempt {
                reply: response.text,
                proposed: path,
                claimed_reachable: claimed,
                report,
                rejection,
                wall_latency_s: response.latency_s,
            });
            if done {
                outcome.success = true;
                break;
            }
        }

        let mut summary = AuditEntry::new(AuditKind::Outcome);
        summary.verdict = Some(outcome.success);
        summary.parsed = outcome.final_path.as_ref().map(|p| serde_json::json!(p.states()));
        summary.detail = Some(format!("{} attempts, {} reprompts", outcome.attempts.len(), outcome.reprompts_used));
        audit.push(summary);
        Ok(outcome)
    }
}

/// A scripted-provider rule that answers this exact task with the BFS
/// shortest path, keyed on the task sentence of the traversal prompt.
pub fn oracle_rule(fsm: &Fsm, start: StateId, goal: StateId) -> Result<ScriptRule, FsmError> {
    let key = format!(
        "Can state {goal} be reached from {start} given the adjacency list {}",
        fsm.encode_as_dict_text()
    );
    let reply = match fsm.shortest_path(start, goal)? {
        Some(p) => format!("True {p}"),
        None => "False".to_string(),
    };
    Ok(ScriptRule::keyed(regex::escape(&key), reply).repeating())
}

/// One planning episode with the bundled templates.
pub fn plan_recovery_path(
    provider: &dyn CompletionProvider,
    fsm: &Fsm,
    start: StateId,
    goal: StateId,
    budget: u32,
) -> Result<PlanOutcome, PlanError> {
    let templates = TemplateStore::bundled();
    let mut audit = AuditLog::new("plan");
    Planner::new(provider, &templates)
        .with_budget(budget)
        .plan(fsm, start, goal, &mut audit)
}
