//! One control decision per planning interval: an operator proposal, a
//! temperature gate with a three-agent reprompting chain, a power gate with
//! its own reprompter, and selection of the best power-valid candidate.
//!
//! Gates are evaluated on the host with the twin. Model validators can be
//! consulted in shadow mode; their verdicts are logged and never override
//! the host verdict.

use serde::{Deserialize, Serialize};

use super::audit::{AuditEntry, AuditKind, AuditLog};
use super::parse::{parse_bool, parse_float_array, ParseFailure};
use super::prompt::{sig6, Bindings, RenderedPrompt, TemplateStore};
use crate::control::{safety_fallback, ControlContext, Controller, ControllerFailure, ControllerOutput, EpisodeConfig};
use crate::provider::{CompletionProvider, ProviderError};
use crate::twin::{HeaterCommand, TwinState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidatorMode {
    /// Host checks only.
    #[default]
    Host,
    /// Host checks decide; model validators are also asked and logged.
    LlmShadow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Temperature,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub gate: GateKind,
    pub passed: bool,
    pub detail: String,
}

/// Twin forecast at the end of one planning interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub t1: f64,
    pub t2: f64,
    /// |(t1 + t2) / 2 − setpoint|, K.
    pub deviation: f64,
}

/// Holds `cmd` (clamped into the actuator limits) for one planning interval
/// on the twin.
pub fn predict_outcome(state: &TwinState, cmd: &HeaterCommand, config: &EpisodeConfig) -> Prediction {
    let twin = &config.twin;
    let clamped = cmd.clamped(&twin.limits);
    match twin.predict(state, &clamped, config.planning_interval, config.control_dt) {
        Ok(s) => Prediction {
            t1: s.t1,
            t2: s.t2,
            deviation: (s.average() - config.setpoint).abs(),
        },
        Err(_) => Prediction {
            t1: f64::NAN,
            t2: f64::NAN,
            deviation: f64::INFINITY,
        },
    }
}

/// Accepts a proposal that brings the forecast average closer to the
/// setpoint than `prev_deviation`. An all-off proposal is also accepted when
/// no earlier candidate managed an improvement.
pub fn temperature_gate(
    prev_deviation: f64,
    proposed: &HeaterCommand,
    state: &TwinState,
    config: &EpisodeConfig,
    prior_improved: bool,
) -> GateVerdict {
    let new = predict_outcome(state, proposed, config).deviation;
    let (passed, detail) = if new < prev_deviation {
        (true, format!("deviation {} K improves on {} K", sig6(new), sig6(prev_deviation)))
    } else if proposed.is_off() && !prior_improved {
        (
            true,
            format!(
                "deviation {} K does not improve on {} K; accepted as zero power with no better candidate",
                sig6(new),
                sig6(prev_deviation)
            ),
        )
    } else {
        (
            false,
            format!(
                "predicted deviation {} K is not below the previous deviation {} K",
                sig6(new),
                sig6(prev_deviation)
            ),
        )
    };
    GateVerdict {
        gate: GateKind::Temperature,
        passed,
        detail,
    }
}

/// Inclusive bound check on both heater powers.
pub fn power_gate(proposed: &HeaterCommand, lo: f64, hi: f64) -> GateVerdict {
    let mut problems = Vec::new();
    for (name, q) in [("q1", proposed.q1), ("q2", proposed.q2)] {
        if q.is_nan() {
            problems.push(format!("{name} is not a number"));
        } else if q < lo {
            problems.push(format!("{name} = {q} W is below lo = {lo} W"));
        } else if q > hi {
            problems.push(format!("{name} = {q} W is above hi = {hi} W"));
        }
    }
    let passed = problems.is_empty();
    GateVerdict {
        gate: GateKind::Power,
        passed,
        detail: if passed {
            format!("both powers within [{lo}, {hi}] W")
        } else {
            problems.join("; ")
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Operator,
    TemperatureChain,
    PowerReprompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub source: CandidateSource,
    /// As proposed, possibly out of range.
    pub command: HeaterCommand,
    /// Temperatures the model itself forecast, if it gave any.
    pub claimed: Option<[f64; 2]>,
    pub predicted: Prediction,
    pub temperature: GateVerdict,
    pub power: GateVerdict,
}

/// Audit record of one planning interval's decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlDecision {
    pub chosen: HeaterCommand,
    /// Twin forecast for `chosen`.
    pub predicted: [f64; 2],
    /// Forecast deviation when keeping the current command.
    pub prev_deviation: f64,
    pub candidates: Vec<Candidate>,
    pub temp_reprompts: u32,
    pub power_reprompts: u32,
    pub used_fallback: bool,
    /// Provider and parse failures, in order.
    pub failures: Vec<String>,
    /// Times a shadow model validator disagreed with the host gate.
    pub shadow_disagreements: u32,
}

enum AskError {
    Provider(ProviderError),
    Parse(ParseFailure),
}

impl std::fmt::Display for AskError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AskError::Provider(e) => write!(f, "provider: {e}"),
            AskError::Parse(e) => write!(f, "parse: {e}"),
        }
    }
}

struct Session<'a> {
    provider: &'a dyn CompletionProvider,
    templates: &'a TemplateStore,
    audit: &'a mut AuditLog,
}

impl Session<'_> {
    fn render(&self, template: &str, bindings: &Bindings, feedback: &str) -> RenderedPrompt {
        self.templates
            .render(template, bindings)
            .unwrap_or_else(|e| panic!("template {template} does not bind: {e}"))
            .with_feedback(feedback)
    }

    /// One exchange, parsed as a list of one of the accepted lengths
    /// (tried in order).
    fn ask_numbers(&mut self, template: &str, bindings: &Bindings, feedback: &str, lens: &[usize]) -> Result<Vec<f64>, AskError> {
        let prompt = self.render(template, bindings, feedback);
        let text = self.exchange(&prompt)?;
        let parsed = lens
            .iter()
            .find_map(|&n| parse_float_array(&text, n).ok())
            .ok_or_else(|| {
                let expected = lens.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" or ");
                ParseFailure {
                    expected: format!("a list of {expected} numbers"),
                    raw: text.clone(),
                }
            });
        self.record_parse(parsed.as_ref().ok().map(|v| serde_json::json!(v)), parsed.as_ref().err());
        parsed.map_err(AskError::Parse)
    }

    fn ask_bool(&mut self, template: &str, bindings: &Bindings) -> Result<bool, AskError> {
        let prompt = self.render(template, bindings, "");
        let text = self.exchange(&prompt)?;
        let parsed = parse_bool(&text);
        self.record_parse(parsed.as_ref().ok().map(|b| serde_json::json!(b)), parsed.as_ref().err());
        parsed.map_err(AskError::Parse)
    }

    fn exchange(&mut self, prompt: &RenderedPrompt) -> Result<String, AskError> {
        let mut entry = AuditEntry::new(AuditKind::Exchange);
        entry.template = Some(prompt.template.clone());
        entry.system = Some(prompt.system.clone());
        entry.user = Some(prompt.user.clone());
        match self.provider.complete(&prompt.request()) {
            Ok(r) => {
                entry.reply = Some(r.text.clone());
                entry.wall_latency_s = Some(r.latency_s);
                self.audit.push(entry);
                Ok(r.text)
            }
            Err(e) => {
                entry.kind = AuditKind::ProviderError;
                entry.detail = Some(e.to_string());
                self.audit.push(entry);
                Err(AskError::Provider(e))
            }
        }
    }

    /// Attaches the parse result to the exchange just logged.
    fn record_parse(&mut self, parsed: Option<serde_json::Value>, err: Option<&ParseFailure>) {
        if let Some(e) = self.audit.last_mut() {
            e.parsed = parsed;
            if let Some(err) = err {
                e.detail = Some(err.to_string());
            }
        }
    }

    fn gate(&mut self, verdict: &GateVerdict, cmd: &HeaterCommand) {
        let mut e = AuditEntry::new(AuditKind::Gate);
        e.template = Some(format!("{:?}", verdict.gate).to_lowercase());
        e.parsed = Some(serde_json::json!([cmd.q1, cmd.q2]));
        e.verdict = Some(verdict.passed);
        e.detail = Some(verdict.detail.clone());
        self.audit.push(e);
    }
}

fn base_bindings(ctx: &ControlContext<'_>, prev_deviation: f64) -> Bindings {
    let c = ctx.config;
    let p = &c.twin.params;
    let s = &ctx.state;
    [
        ("t_avg", sig6(ctx.setpoint)),
        ("curr_t_avg", sig6(s.average())),
        ("t1", sig6(s.t1)),
        ("t2", sig6(s.t2)),
        ("q1", sig6(ctx.current.q1)),
        ("q2", sig6(ctx.current.q2)),
        ("pred_t1", sig6(s.t1)),
        ("pred_t2", sig6(s.t2)),
        ("avg_score", sig6(prev_deviation)),
        ("new_score", sig6(prev_deviation)),
        ("lo_q", sig6(c.twin.limits.lo)),
        ("hi_q", sig6(c.twin.limits.hi)),
        ("interval", format!("{}", c.planning_interval)),
        ("mass", sig6(p.mass)),
        ("heat_capacity", sig6(p.heat_capacity)),
        ("area", sig6(p.area)),
        ("htc", sig6(p.htc)),
        ("emissivity", sig6(p.emissivity)),
        ("sigma", format!("{:e}", p.stefan_boltzmann)),
        ("ambient", sig6(p.ambient)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn with(mut b: Bindings, pairs: &[(&str, String)]) -> Bindings {
    for (k, v) in pairs {
        b.insert((*k).to_string(), v.clone());
    }
    b
}

/// Runs the full decision loop for one planning interval. Provider and parse
/// failures consume one reprompt from the budget of the stage in which they
/// occur; they never escape this function.
pub fn decide_control_action(
    provider: &dyn CompletionProvider,
    templates: &TemplateStore,
    ctx: &ControlContext<'_>,
    mode: ValidatorMode,
    audit: &mut AuditLog,
) -> ControlDecision {
    let config = ctx.config;
    let state = ctx.state;
    let limits = config.twin.limits;
    let budgets = config.budgets;
    let prev_deviation = predict_outcome(&state, &ctx.current, config).deviation;
    let base = base_bindings(ctx, prev_deviation);

    let mut s = Session {
        provider,
        templates,
        audit,
    };
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut failures: Vec<String> = Vec::new();
    let mut temp_reprompts = 0u32;
    let mut power_reprompts = 0u32;
    let mut shadow_disagreements = 0u32;

    let mut evaluate = |s: &mut Session<'_>,
                        candidates: &mut Vec<Candidate>,
                        source: CandidateSource,
                        command: HeaterCommand,
                        claimed: Option<[f64; 2]>| {
        let prior_improved = candidates.iter().any(|c| c.predicted.deviation < prev_deviation);
        let predicted = predict_outcome(&state, &command, config);
        let temperature = temperature_gate(prev_deviation, &command, &state, config, prior_improved);
        let power = power_gate(&command, limits.lo, limits.hi);
        s.gate(&temperature, &command);
        s.gate(&power, &command);
        if mode == ValidatorMode::LlmShadow {
            let cmd_bindings = with(
                base.clone(),
                &[
                    ("q1", sig6(command.q1)),
                    ("q2", sig6(command.q2)),
                    ("new_score", sig6(predicted.deviation)),
                ],
            );
            for (template, host) in [("temp_validation", &temperature), ("power_validation_task", &power)] {
                if let Ok(llm) = s.ask_bool(template, &cmd_bindings) {
                    if llm != host.passed {
                        shadow_disagreements += 1;
                    }
                }
            }
        }
        candidates.push(Candidate {
            source,
            command,
            claimed,
            predicted,
            temperature,
            power,
        });
    };

    // operator proposal
    let mut feedback = String::new();
    let mut temp_passed = false;
    loop {
        match s.ask_numbers("operator_task", &base, &feedback, &[4, 2]) {
            Ok(v) => {
                let claimed = (v.len() == 4).then(|| [v[2], v[3]]);
                evaluate(&mut s, &mut candidates, CandidateSource::Operator, HeaterCommand::new(v[0], v[1]), claimed);
                temp_passed = candidates.last().expect("just pushed").temperature.passed;
                break;
            }
            Err(e) => {
                failures.push(format!("operator_task: {e}"));
                feedback = format!("the reply could not be used ({e}). Answer with one list [q1, q2, pred_t1, pred_t2].");
                if temp_reprompts >= budgets.temperature {
                    break;
                }
                temp_reprompts += 1;
            }
        }
    }

    // temperature reprompting chain
    if !temp_passed && !candidates.is_empty() {
        while temp_reprompts < budgets.temperature {
            temp_reprompts += 1;
            let basis = candidates.last().expect("non-empty").clone();
            let chain_feedback = basis.temperature.detail.clone();
            let basis_bindings = with(
                base.clone(),
                &[
                    ("q1", sig6(basis.command.q1)),
                    ("q2", sig6(basis.command.q2)),
                    ("avg_score", sig6(basis.predicted.deviation)),
                ],
            );
            let pred = match s.ask_numbers("temp_reprompting_task_1", &basis_bindings, "", &[2]) {
                Ok(v) => [v[0], v[1]],
                Err(e) => {
                    failures.push(format!("temp_reprompting_task_1: {e}"));
                    continue;
                }
            };
            let pred_bindings = with(
                basis_bindings,
                &[("pred_t1", sig6(pred[0])), ("pred_t2", sig6(pred[1]))],
            );
            let q1 = match s.ask_numbers("temp_reprompting_task_2", &pred_bindings, &chain_feedback, &[1]) {
                Ok(v) => v[0],
                Err(e) => {
                    failures.push(format!("temp_reprompting_task_2: {e}"));
                    continue;
                }
            };
            let h2_bindings = with(pred_bindings, &[("q1", sig6(q1))]);
            let q2 = match s.ask_numbers("temp_reprompting_task_3", &h2_bindings, &chain_feedback, &[3, 2]) {
                Ok(v) => v[1],
                Err(e) => {
                    failures.push(format!("temp_reprompting_task_3: {e}"));
                    continue;
                }
            };
            evaluate(
                &mut s,
                &mut candidates,
                CandidateSource::TemperatureChain,
                HeaterCommand::new(q1, q2),
                Some(pred),
            );
            if candidates.last().expect("just pushed").temperature.passed {
                break;
            }
        }
    }

    // power stage
    let entering = candidates
        .iter()
        .rposition(|c| c.temperature.passed)
        .or_else(|| {
            candidates
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.predicted.deviation.total_cmp(&b.1.predicted.deviation))
                .map(|(i, _)| i)
        });
    if let Some(idx) = entering {
        let mut current = candidates[idx].clone();
        let mut feedback = String::new();
        while !current.power.passed && power_reprompts < budgets.power {
            power_reprompts += 1;
            let b = with(
                base.clone(),
                &[("q1", sig6(current.command.q1)), ("q2", sig6(current.command.q2))],
            );
            let fb = if feedback.is_empty() { current.power.detail.clone() } else { feedback.clone() };
            match s.ask_numbers("power_reprompting_task", &b, &fb, &[2]) {
                Ok(v) => {
                    evaluate(&mut s, &mut candidates, CandidateSource::PowerReprompt, HeaterCommand::new(v[0], v[1]), None);
                    current = candidates.last().expect("just pushed").clone();
                    feedback.clear();
                }
                Err(e) => {
                    failures.push(format!("power_reprompting_task: {e}"));
                    feedback = format!("the reply could not be used ({e}). Answer with one list [q1, q2].");
                }
            }
        }
    }

    // selection
    let best = candidates.iter().filter(|c| c.power.passed).min_by(|a, b| {
        a.predicted
            .deviation
            .total_cmp(&b.predicted.deviation)
            .then(a.command.total().total_cmp(&b.command.total()))
    });
    let (chosen, used_fallback) = match best {
        Some(c) => (c.command, false),
        None => (safety_fallback(&state, config, ctx.history), true),
    };
    let forecast = predict_outcome(&state, &chosen, config);
    let mut summary = AuditEntry::new(AuditKind::Outcome);
    summary.parsed = Some(serde_json::json!([chosen.q1, chosen.q2]));
    summary.verdict = Some(!used_fallback);
    summary.detail = Some(format!(
        "{} candidates, {temp_reprompts} temperature and {power_reprompts} power reprompts{}",
        candidates.len(),
        if used_fallback { ", safety fallback" } else { "" }
    ));
    s.audit.push(summary);

    ControlDecision {
        chosen,
        predicted: [forecast.t1, forecast.t2],
        prev_deviation,
        candidates,
        temp_reprompts,
        power_reprompts,
        used_fallback,
        failures,
        shadow_disagreements,
    }
}

/// A [`Controller`] backed by a completion provider.
pub struct AgentController<P: CompletionProvider> {
    provider: P,
    templates: TemplateStore,
    mode: ValidatorMode,
    audit: AuditLog,
}

impl<P: CompletionProvider> AgentController<P> {
    pub fn new(provider: P, templates: TemplateStore) -> Self {
        Self {
            provider,
            templates,
            mode: ValidatorMode::Host,
            audit: AuditLog::new("control"),
        }
    }

    pub fn with_mode(mut self, mode: ValidatorMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn into_audit(self) -> AuditLog {
        self.audit
    }
}

impl<P: CompletionProvider> Controller for AgentController<P> {
    fn name(&self) -> String {
        format!("llm:{}", self.provider.label())
    }

    fn decide(&mut self, ctx: &ControlContext<'_>) -> Result<ControllerOutput, ControllerFailure> {
        self.audit.set_scope(format!("interval_{:03}", ctx.interval_index));
        let decision = decide_control_action(&self.provider, &self.templates, ctx, self.mode, &mut self.audit);
        Ok(ControllerOutput {
            command: decision.chosen,
            decision: Some(decision),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{run_episode, CommandSource};
    use crate::provider::{ScriptRule, ScriptedProvider};

    fn ctx_for<'a>(config: &'a EpisodeConfig, history: &'a [HeaterCommand]) -> ControlContext<'a> {
        ControlContext {
            state: TwinState::new(305.6, 305.6),
            setpoint: config.setpoint,
            interval_index: 0,
            current: HeaterCommand::OFF,
            history,
            config,
        }
    }

    fn decide(provider: &ScriptedProvider, mode: ValidatorMode) -> (ControlDecision, AuditLog) {
        let cfg = EpisodeConfig::default();
        let mut audit = AuditLog::new("t");
        let d = decide_control_action(provider, &TemplateStore::bundled(), &ctx_for(&cfg, &[]), mode, &mut audit);
        (d, audit)
    }

    #[test]
    fn power_gate_examples() {
        assert!(power_gate(&HeaterCommand::new(0.25, 0.25), 0.0, 0.3).passed);
        let v = power_gate(&HeaterCommand::new(0.31, 0.1), 0.0, 0.3);
        assert!(!v.passed);
        assert!(v.detail.contains("q1") && v.detail.contains("hi = 0.3"));
        assert!(power_gate(&HeaterCommand::new(0.3, 0.0), 0.0, 0.3).passed);
        assert!(!power_gate(&HeaterCommand::new(f64::NAN, 0.0), 0.0, 0.3).passed);
        assert!(!power_gate(&HeaterCommand::new(0.1, -0.01), 0.0, 0.3).passed);
    }

    #[test]
    fn temperature_gate_examples() {
        let cfg = EpisodeConfig::default();
        let state = TwinState::new(305.6, 305.6);
        let cmd = HeaterCommand::new(0.2, 0.2);
        let dev = predict_outcome(&state, &cmd, &cfg).deviation;
        assert!(temperature_gate(dev + 0.8, &cmd, &state, &cfg, false).passed);
        let fail = temperature_gate(dev - 0.4, &cmd, &state, &cfg, false);
        assert!(!fail.passed);
        assert!(fail.detail.contains(&sig6(dev)) && fail.detail.contains(&sig6(dev - 0.4)));
        // nothing can beat zero deviation; only the all-off escape passes
        assert!(temperature_gate(0.0, &HeaterCommand::OFF, &state, &cfg, false).passed);
        assert!(!temperature_gate(0.0, &HeaterCommand::OFF, &state, &cfg, true).passed);
        assert!(!temperature_gate(0.0, &cmd, &state, &cfg, false).passed);
    }

    #[test]
    fn gate_is_pure() {
        let cfg = EpisodeConfig::default();
        let state = TwinState::new(304.0, 306.0);
        let cmd = HeaterCommand::new(0.7, 0.1);
        let a = temperature_gate(0.5, &cmd, &state, &cfg, false);
        let b = temperature_gate(0.5, &cmd, &state, &cfg, false);
        assert_eq!(a, b);
    }

    #[test]
    fn first_try_success() {
        let p = ScriptedProvider::from_replies(["[0.3, 0.3, 306.1, 306.2]"]);
        let (d, _) = decide(&p, ValidatorMode::Host);
        assert_eq!(d.chosen, HeaterCommand::new(0.3, 0.3));
        assert_eq!((d.temp_reprompts, d.power_reprompts, d.used_fallback), (0, 0, false));
        assert_eq!(d.candidates[0].claimed, Some([306.1, 306.2]));
    }

    #[test]
    fn one_power_reprompt() {
        let p = ScriptedProvider::from_replies(["[0.5, 0.5, 307, 307]", "[0.3, 0.1]"]);
        let (d, _) = decide(&p, ValidatorMode::Host);
        assert_eq!(d.power_reprompts, 1);
        assert_eq!(d.temp_reprompts, 0);
        assert_eq!(d.chosen, HeaterCommand::new(0.3, 0.1));
        assert!(!d.candidates[0].power.passed && d.candidates[1].power.passed);
    }

    #[test]
    fn unparseable_replies_exhaust_budget() {
        let p = ScriptedProvider::new(vec![ScriptRule::reply("I am not sure.").repeating()]).unwrap();
        let (d, audit) = decide(&p, ValidatorMode::Host);
        assert!(d.used_fallback);
        assert_eq!(d.temp_reprompts, 5);
        assert_eq!(d.failures.len(), 6);
        assert_eq!(d.chosen, HeaterCommand::OFF);
        let exchanges = audit.entries().iter().filter(|e| e.kind == AuditKind::Exchange).count();
        assert_eq!(exchanges, 6);
    }

    #[test]
    fn provider_errors_are_contained() {
        let p = ScriptedProvider::from_replies(Vec::<String>::new());
        let (d, audit) = decide(&p, ValidatorMode::Host);
        assert!(d.used_fallback);
        assert!(audit.entries().iter().any(|e| e.kind == AuditKind::ProviderError));
    }

    #[test]
    fn temperature_chain_produces_candidate() {
        let p = ScriptedProvider::new(vec![
            ScriptRule::keyed("Propose heater powers", "[0.05, 0.05, 305, 305]"),
            ScriptRule::keyed("Forecast heater temperatures", "[305.2, 305.3]"),
            ScriptRule::keyed("new power for heater 1", "[0.3]"),
            ScriptRule::keyed("new power for heater 2", "[0.3, 0.3, 0.1]"),
        ])
        .unwrap();
        let cfg = EpisodeConfig::default();
        let hist = [];
        let mut ctx = ctx_for(&cfg, &hist);
        ctx.current = HeaterCommand::new(0.2, 0.2);
        let mut audit = AuditLog::new("t");
        let d = decide_control_action(&p, &TemplateStore::bundled(), &ctx, ValidatorMode::Host, &mut audit);
        assert_eq!(d.temp_reprompts, 1);
        assert_eq!(d.candidates.len(), 2);
        assert!(!d.candidates[0].temperature.passed);
        assert_eq!(d.candidates[1].source, CandidateSource::TemperatureChain);
        assert_eq!(d.candidates[1].claimed, Some([305.2, 305.3]));
        assert!(d.candidates[1].temperature.passed);
        assert_eq!(d.chosen, HeaterCommand::new(0.3, 0.3));
        // the heater 2 agent saw heater 1's answer
        let h2 = audit.entries().iter().find(|e| e.template.as_deref() == Some("temp_reprompting_task_3")).unwrap();
        assert!(h2.user.as_deref().unwrap().contains("heater 1 fixed at 0.300000 W"));
    }

    #[test]
    fn shadow_validator_never_overrides() {
        let p = ScriptedProvider::new(vec![
            ScriptRule::keyed("Propose heater powers", "[0.3, 0.3, 306, 306]"),
            ScriptRule::keyed("Judge whether", "False").repeating(),
            ScriptRule::keyed("Check a heater command", "False").repeating(),
        ])
        .unwrap();
        let (d, _) = decide(&p, ValidatorMode::LlmShadow);
        assert_eq!(d.chosen, HeaterCommand::new(0.3, 0.3));
        assert_eq!(d.shadow_disagreements, 2);
    }

    #[test]
    fn agent_episode_is_deterministic_and_safe() {
        let script = || {
            ScriptedProvider::new(vec![
                ScriptRule::keyed("Propose heater powers", "[0.45, 0.2, 306, 306]").repeating(),
                ScriptRule::keyed("limits", "[0.3, 0.28]").repeating(),
            ])
            .unwrap()
        };
        let cfg = EpisodeConfig::default();
        let mut a = AgentController::new(script(), TemplateStore::bundled());
        let la = run_episode(&cfg, &mut a).unwrap();
        let mut b = AgentController::new(script(), TemplateStore::bundled());
        let lb = run_episode(&cfg, &mut b).unwrap();
        assert_eq!(la.trajectory, lb.trajectory);
        assert_eq!(
            crate::agent::normalize_json_lines(&a.audit().to_jsonl()),
            crate::agent::normalize_json_lines(&b.audit().to_jsonl())
        );
        assert!(la.commands().all(|c| cfg.twin.limits.admits(&c)));
        assert!(la.decisions.iter().all(|d| d.source == CommandSource::Controller));
        assert_eq!(la.metrics.power_reprompts, 30);
    }
}
