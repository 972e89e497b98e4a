//! Prompting, reply parsing and the two agent loops: path planning over a
//! state machine and per-interval heater control.

pub mod audit;
pub mod decision;
pub mod parse;
pub mod planning;
pub mod prompt;

pub use audit::{normalize_json_lines, strip_wall_fields, AuditEntry, AuditKind, AuditLog};
pub use decision::{
    decide_control_action, power_gate, predict_outcome, temperature_gate, AgentController, Candidate,
    CandidateSource, ControlDecision, GateKind, GateVerdict, Prediction, ValidatorMode,
};
pub use parse::{numeric_lists, parse_bool, parse_float_array, parse_path, render_float_array, ParseFailure};
pub use planning::{
    judge_reply, oracle_rule, plan_recovery_path, recommendation, PlanAttempt, PlanError, PlanOutcome, Planner, Rejection,
    DEFAULT_PLAN_BUDGET,
};
pub use prompt::{render_text, sig6, Bindings, PromptError, PromptTemplate, RenderedPrompt, TemplateStore};
