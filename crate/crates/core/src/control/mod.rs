//! Controllers and the episode runner that drives them against the twin.
//!
//! The runner acts as the monitoring role: at every planning-interval
//! boundary it hands the current plant state to the controller, checks the
//! returned command against the actuator limits and engages the safety
//! fallback whenever the controller fails or proposes something out of range.
//! Plant time does not advance while a controller deliberates.

mod pid;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::ControlDecision;
use crate::metrics::{self, ControlMetrics};
use crate::twin::{self, HeaterCommand, Sample, Trajectory, Twin, TwinError, TwinState};

pub use pid::{pid_update, split_command, PidGains, PidState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error(transparent)]
    Twin(#[from] TwinError),
}

/// Reprompt budgets per planning interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReprompBudgets {
    pub temperature: u32,
    pub power: u32,
}

impl Default for ReprompBudgets {
    fn default() -> Self {
        Self {
            temperature: 5,
            power: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialTemperatures {
    pub t1: f64,
    pub t2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Target for the average of both heater temperatures, K.
    pub setpoint: f64,
    pub planning_interval: f64,
    pub control_dt: f64,
    pub horizon: f64,
    pub initial: InitialTemperatures,
    pub twin: Twin,
    pub budgets: ReprompBudgets,
    pub pid: PidGains,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            setpoint: 306.15,
            planning_interval: 30.0,
            control_dt: 1.0,
            horizon: 900.0,
            initial: InitialTemperatures { t1: 305.6, t2: 305.6 },
            twin: Twin::default(),
            budgets: ReprompBudgets::default(),
            pid: PidGains::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        self.twin.validate()?;
        self.pid.validate()?;
        if !(self.setpoint.is_finite() && self.setpoint > 0.0) {
            return Err(ControlError::InvalidConfig(format!("setpoint {} K", self.setpoint)));
        }
        if !(self.initial.t1 > 0.0 && self.initial.t2 > 0.0 && self.initial.t1.is_finite() && self.initial.t2.is_finite()) {
            return Err(ControlError::InvalidConfig("initial temperatures must be positive kelvin".into()));
        }
        let intervals = twin::step_count(self.horizon, self.planning_interval)
            .map_err(|_| ControlError::InvalidConfig("horizon must be a multiple of the planning interval".into()))?;
        if intervals == 0 {
            return Err(ControlError::InvalidConfig("horizon must cover at least one interval".into()));
        }
        twin::step_count(self.planning_interval, self.control_dt).map_err(|_| {
            ControlError::InvalidConfig("planning interval must be a multiple of control_dt".into())
        })?;
        Ok(())
    }

    pub fn initial_state(&self) -> TwinState {
        TwinState::new(self.initial.t1, self.initial.t2)
    }

    pub fn intervals(&self) -> usize {
        twin::step_count(self.horizon, self.planning_interval).unwrap_or(0)
    }

    pub fn steps_per_interval(&self) -> usize {
        twin::step_count(self.planning_interval, self.control_dt).unwrap_or(0)
    }
}

/// What a controller sees when asked for a command.
#[derive(Debug, Clone, Copy)]
pub struct ControlContext<'a> {
    pub state: TwinState,
    pub setpoint: f64,
    pub interval_index: usize,
    /// Command currently applied to the plant.
    pub current: HeaterCommand,
    /// Power-valid commands applied so far, oldest first.
    pub history: &'a [HeaterCommand],
    pub config: &'a EpisodeConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutput {
    pub command: HeaterCommand,
    pub decision: Option<ControlDecision>,
}

impl ControllerOutput {
    pub fn command(command: HeaterCommand) -> Self {
        Self {
            command,
            decision: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerFailure {
    pub reason: String,
    pub decision: Option<ControlDecision>,
}

impl ControllerFailure {
    pub fn new(reason: impl Into<String>) -> Self {
        Self {
            reason: reason.into(),
            decision: None,
        }
    }
}

pub trait Controller {
    fn name(&self) -> String;

    /// Seconds between command updates within an interval; `None` holds one
    /// command for the whole planning interval.
    fn update_period(&self) -> Option<f64> {
        None
    }

    fn decide(&mut self, ctx: &ControlContext<'_>) -> Result<ControllerOutput, ControllerFailure>;
}

/// Conservative command used whenever a controller cannot supply a valid one:
/// stop heating above the setpoint, otherwise repeat the last power-valid
/// command, otherwise stop heating.
pub fn safety_fallback(state: &TwinState, config: &EpisodeConfig, history: &[HeaterCommand]) -> HeaterCommand {
    if state.average() > config.setpoint {
        return HeaterCommand::OFF;
    }
    history
        .iter()
        .rev()
        .find(|c| config.twin.limits.admits(c))
        .copied()
        .unwrap_or(HeaterCommand::OFF)
}

/// Always off.
#[derive(Debug, Default, Clone)]
pub struct ZeroController;

impl Controller for ZeroController {
    fn name(&self) -> String {
        "zero".into()
    }

    fn decide(&mut self, _ctx: &ControlContext<'_>) -> Result<ControllerOutput, ControllerFailure> {
        Ok(ControllerOutput::command(HeaterCommand::OFF))
    }
}

/// PID on the average temperature, re-evaluated every `control_dt`, with the
/// total power split evenly across both heaters.
#[derive(Debug, Clone)]
pub struct PidController {
    gains: PidGains,
    dt: f64,
    state: PidState,
}

impl PidController {
    pub fn new(gains: PidGains, dt: f64) -> Self {
        Self {
            gains,
            dt,
            state: PidState::default(),
        }
    }

    pub fn from_config(config: &EpisodeConfig) -> Self {
        Self::new(config.pid, config.control_dt)
    }

    pub fn pid_state(&self) -> PidState {
        self.state
    }
}

impl Controller for PidController {
    fn name(&self) -> String {
        "pid".into()
    }

    fn update_period(&self) -> Option<f64> {
        Some(self.dt)
    }

    fn decide(&mut self, ctx: &ControlContext<'_>) -> Result<ControllerOutput, ControllerFailure> {
        let error = ctx.setpoint - ctx.state.average();
        let (u, next) = pid_update(&self.gains, self.state, error, self.dt);
        self.state = next;
        let per_heater = ctx.config.twin.limits.hi;
        split_command(u.min(2.0 * per_heater).max(0.0), per_heater)
            .map(ControllerOutput::command)
            .map_err(|e| ControllerFailure::new(e.to_string()))
    }
}

/// Replays a fixed list of commands, one per planning interval, and fails
/// once the list is exhausted.
#[derive(Debug, Clone)]
pub struct ReplayController {
    commands: Vec<HeaterCommand>,
    next: usize,
}

impl ReplayController {
    pub fn new(commands: Vec<HeaterCommand>) -> Self {
        Self { commands, next: 0 }
    }
}

impl Controller for ReplayController {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn decide(&mut self, _ctx: &ControlContext<'_>) -> Result<ControllerOutput, ControllerFailure> {
        let cmd = self
            .commands
            .get(self.next)
            .copied()
            .ok_or_else(|| ControllerFailure::new("command script exhausted"))?;
        self.next += 1;
        Ok(ControllerOutput::command(cmd))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandSource {
    Controller,
    Fallback,
}

/// Audit record of one planning interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub interval: usize,
    pub time: f64,
    pub state: TwinState,
    pub command: HeaterCommand,
    pub source: CommandSource,
    /// Why the fallback engaged, when it did.
    pub failure: Option<String>,
    /// Inner-loop updates within the interval that had to be overridden.
    pub substep_overrides: u32,
    pub decision: Option<ControlDecision>,
    pub wall_latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub controller: String,
    pub config: EpisodeConfig,
    pub decisions: Vec<DecisionRecord>,
    pub metrics: ControlMetrics,
    /// Written separately as CSV.
    #[serde(skip)]
    pub trajectory: Trajectory,
}

impl EpisodeLog {
    pub fn fallback_count(&self) -> usize {
        self.decisions
            .iter()
            .filter(|d| d.source == CommandSource::Fallback)
            .count()
    }

    pub fn commands(&self) -> impl Iterator<Item = HeaterCommand> + '_ {
        self.trajectory.samples.iter().map(|s| HeaterCommand::new(s.q1, s.q2))
    }
}

/// Runs one closed-loop episode.
///
/// Every command that reaches the twin satisfies the actuator limits; any
/// controller failure or out-of-range proposal is replaced by
/// [`safety_fallback`] and recorded. Only a non-finite plant state aborts.
pub fn run_episode(config: &EpisodeConfig, controller: &mut dyn Controller) -> Result<EpisodeLog, ControlError> {
    config.validate()?;
    let twin = config.twin;
    let limits = twin.limits;
    let dt = config.control_dt;
    let steps = config.steps_per_interval();
    let fast = controller.update_period().is_some();

    let start = config.initial_state();
    let mut state = start;
    let mut current = HeaterCommand::OFF;
    let mut history: Vec<HeaterCommand> = Vec::new();
    let mut samples = Vec::with_capacity(config.intervals() * steps + 1);
    let mut decisions = Vec::with_capacity(config.intervals());
    let mut step_index = 0usize;

    for interval in 0..config.intervals() {
        let ctx = ControlContext {
            state,
            setpoint: config.setpoint,
            interval_index: interval,
            current,
            history: &history,
            config,
        };
        let started = Instant::now();
        let result = controller.decide(&ctx);
        let wall_latency_s = started.elapsed().as_secs_f64();

        let (command, source, failure, decision) = resolve(result, &limits, &state, config, &history);
        current = command;
        if source == CommandSource::Controller {
            history.push(command);
        }
        let mut record = DecisionRecord {
            interval,
            time: state.time,
            state,
            command,
            source,
            failure,
            substep_overrides: 0,
            decision,
            wall_latency_s,
        };

        for k in 0..steps {
            if fast && k > 0 {
                let ctx = ControlContext {
                    state,
                    setpoint: config.setpoint,
                    interval_index: interval,
                    current,
                    history: &history,
                    config,
                };
                let (cmd, src, _, _) = resolve(controller.decide(&ctx), &limits, &state, config, &history);
                if src == CommandSource::Fallback {
                    record.substep_overrides += 1;
                } else {
                    history.push(cmd);
                }
                current = cmd;
            }
            samples.push(Sample::new(&state, &current));
            let mut next = twin.step_rk4(&state, &current, dt)?;
            step_index += 1;
            next.time = start.time + step_index as f64 * dt;
            state = next;
        }
        decisions.push(record);
    }
    samples.push(Sample::new(&state, &current));

    let trajectory = Trajectory { samples };
    let metrics = metrics::control_metrics(&trajectory, config.setpoint, &decisions)
        .map_err(|e| ControlError::InvalidConfig(e.to_string()))?;
    Ok(EpisodeLog {
        controller: controller.name(),
        config: config.clone(),
        decisions,
        metrics,
        trajectory,
    })
}

fn resolve(
    result: Result<ControllerOutput, ControllerFailure>,
    limits: &twin::PowerLimits,
    state: &TwinState,
    config: &EpisodeConfig,
    history: &[HeaterCommand],
) -> (HeaterCommand, CommandSource, Option<String>, Option<ControlDecision>) {
    match result {
        Ok(out) => {
            let fallback_in_decision = out.decision.as_ref().is_some_and(|d| d.used_fallback);
            if !limits.admits(&out.command) {
                let reason = format!(
                    "command ({}, {}) W outside [{}, {}] W",
                    out.command.q1, out.command.q2, limits.lo, limits.hi
                );
                (safety_fallback(state, config, history), CommandSource::Fallback, Some(reason), out.decision)
            } else if fallback_in_decision {
                (
                    out.command,
                    CommandSource::Fallback,
                    Some("no power-valid candidate within the reprompt budgets".into()),
                    out.decision,
                )
            } else {
                (out.command, CommandSource::Controller, None, out.decision)
            }
        }
        Err(f) => (
            safety_fallback(state, config, history),
            CommandSource::Fallback,
            Some(f.reason),
            f.decision,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twin::{equilibrium_temperature, DisturbanceProfile, TwinParams};

    fn ambient_config() -> EpisodeConfig {
        EpisodeConfig {
            initial: InitialTemperatures { t1: 293.15, t2: 293.15 },
            ..EpisodeConfig::default()
        }
    }

    #[test]
    fn thirty_decisions_per_default_episode() {
        let log = run_episode(&EpisodeConfig::default(), &mut ZeroController).unwrap();
        assert_eq!(log.decisions.len(), 30);
        assert_eq!(log.trajectory.len(), 901);
        assert_eq!(log.trajectory.last().unwrap().time, 900.0);
    }

    #[test]
    fn zero_controller_from_ambient_is_flat() {
        let log = run_episode(&ambient_config(), &mut ZeroController).unwrap();
        assert!(log.trajectory.samples.iter().all(|s| s.t1 == 293.15 && s.t2 == 293.15));
        assert!((log.metrics.tw_mae - (306.15 - 293.15)).abs() < 1e-9);
    }

    #[test]
    fn fallback_rules() {
        let cfg = EpisodeConfig::default();
        let hot = TwinState::new(310.0, 310.0);
        let cold = TwinState::new(300.0, 300.0);
        let valid = HeaterCommand::new(0.1, 0.2);
        assert_eq!(safety_fallback(&hot, &cfg, &[valid]), HeaterCommand::OFF);
        assert_eq!(safety_fallback(&cold, &cfg, &[]), HeaterCommand::OFF);
        assert_eq!(safety_fallback(&cold, &cfg, &[valid]), valid);
        assert_eq!(safety_fallback(&cold, &cfg, &[valid, HeaterCommand::new(0.5, 0.0)]), valid);
    }

    struct Failing;
    impl Controller for Failing {
        fn name(&self) -> String {
            "failing".into()
        }
        fn decide(&mut self, _: &ControlContext<'_>) -> Result<ControllerOutput, ControllerFailure> {
            Err(ControllerFailure::new("boom"))
        }
    }

    #[test]
    fn always_failing_controller_gets_fallback_everywhere() {
        let cfg = ambient_config();
        let log = run_episode(&cfg, &mut Failing).unwrap();
        assert_eq!(log.fallback_count(), 30);
        assert!(log.decisions.iter().all(|d| d.command == HeaterCommand::OFF && d.failure.as_deref() == Some("boom")));
        let t_max = equilibrium_temperature(0.3, &cfg.twin.params, cfg.twin.params.htc).unwrap() + 0.1;
        assert!(log.trajectory.samples.iter().all(|s| s.t1 >= 293.15 - 1e-9 && s.t2 <= t_max));
    }

    #[test]
    fn out_of_range_proposal_is_replaced() {
        let cfg = ambient_config();
        let mut c = ReplayController::new(vec![HeaterCommand::new(0.2, 0.2), HeaterCommand::new(0.9, 0.0)]);
        let log = run_episode(&cfg, &mut c).unwrap();
        assert_eq!(log.decisions[0].source, CommandSource::Controller);
        assert_eq!(log.decisions[1].source, CommandSource::Fallback);
        // below setpoint with a valid history: repeat the last valid command
        assert_eq!(log.decisions[1].command, HeaterCommand::new(0.2, 0.2));
        assert!(log.commands().all(|c| cfg.twin.limits.admits(&c)));
    }

    #[test]
    fn pid_tracks_setpoint_under_fan() {
        let cfg = EpisodeConfig::default();
        let log = run_episode(&cfg, &mut PidController::from_config(&cfg)).unwrap();
        assert!(log.metrics.tw_mae < 0.6, "tw_mae {}", log.metrics.tw_mae);
        let tail_start = cfg.horizon - 3.0 * cfg.planning_interval;
        for s in log.trajectory.samples.iter().filter(|s| s.time >= tail_start) {
            assert!((s.average() - cfg.setpoint).abs() < 0.5, "{s:?}");
        }
    }

    #[test]
    fn episodes_are_reproducible() {
        let cfg = EpisodeConfig::default();
        let a = run_episode(&cfg, &mut PidController::from_config(&cfg)).unwrap();
        let b = run_episode(&cfg, &mut PidController::from_config(&cfg)).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
    }

    #[test]
    fn config_validation() {
        let mut cfg = EpisodeConfig::default();
        cfg.horizon = 905.0;
        assert!(cfg.validate().is_err());
        cfg = EpisodeConfig::default();
        cfg.control_dt = 7.0;
        assert!(cfg.validate().is_err());
        cfg = EpisodeConfig::default();
        cfg.twin.params = TwinParams { mass: -1.0, ..TwinParams::default() };
        assert!(cfg.validate().is_err());
        cfg = EpisodeConfig::default();
        cfg.twin.disturbance = DisturbanceProfile { fan_on_heater: 3, ..DisturbanceProfile::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = EpisodeConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: EpisodeConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: EpisodeConfig = serde_json::from_str(r#"{"setpoint": 300.0}"#).unwrap();
        assert_eq!(partial.setpoint, 300.0);
        assert_eq!(partial.horizon, 900.0);
    }
}
