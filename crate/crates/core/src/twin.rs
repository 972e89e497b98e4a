//! Lumped-capacitance digital twin of two independent heaters.
//!
//! Each heater obeys
//!
//! ```text
//! m·Cp·dT/dt = q − U_eff·A·(T − Ta) − ε·σ·A·(T⁴ − Ta⁴)
//! ```
//!
//! with `U_eff = U` except on the fan-cooled heater while the fan is running,
//! where `U_eff = U · u_multiplier`. The heaters do not exchange heat.
//! Temperatures are kelvin, powers watts, times seconds.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TwinError {
    #[error("non-finite state at t = {time} s")]
    NonFiniteState { time: f64 },
    #[error("heater command ({q1}, {q2}) W outside [{lo}, {hi}] W")]
    CommandOutOfRange { q1: f64, q2: f64, lo: f64, hi: f64 },
    #[error("invalid step: {0}")]
    InvalidStep(String),
    #[error("invalid twin parameters: {0}")]
    InvalidParams(String),
    #[error("no sign change of the heat balance on [{lo}, {hi}] K")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("trajectory csv: {0}")]
    Csv(String),
}

/// Physical constants of one heater (both heaters are identical).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwinParams {
    /// kg
    pub mass: f64,
    /// J/(kg·K)
    pub heat_capacity: f64,
    /// m²
    pub area: f64,
    /// W/(m²·K)
    pub htc: f64,
    pub emissivity: f64,
    /// W/(m²·K⁴)
    pub stefan_boltzmann: f64,
    /// K
    pub ambient: f64,
}

impl Default for TwinParams {
    fn default() -> Self {
        Self {
            mass: 0.004,
            heat_capacity: 500.0,
            area: 1.2e-3,
            htc: 10.0,
            emissivity: 0.9,
            stefan_boltzmann: 5.67e-8,
            ambient: 293.15,
        }
    }
}

impl TwinParams {
    pub fn validate(&self) -> Result<(), TwinError> {
        let fields = [
            ("mass", self.mass),
            ("heat_capacity", self.heat_capacity),
            ("area", self.area),
            ("htc", self.htc),
            ("emissivity", self.emissivity),
            ("stefan_boltzmann", self.stefan_boltzmann),
            ("ambient", self.ambient),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(TwinError::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.emissivity > 1.0 {
            return Err(TwinError::InvalidParams(format!(
                "emissivity must be in (0, 1], got {}",
                self.emissivity
            )));
        }
        Ok(())
    }

    /// Thermal mass `m·Cp` in J/K.
    pub fn thermal_mass(&self) -> f64 {
        self.mass * self.heat_capacity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwinState {
    pub t1: f64,
    pub t2: f64,
    pub time: f64,
}

impl TwinState {
    pub fn new(t1: f64, t2: f64) -> Self {
        Self { t1, t2, time: 0.0 }
    }

    pub fn at_ambient(params: &TwinParams) -> Self {
        Self::new(params.ambient, params.ambient)
    }

    pub fn average(&self) -> f64 {
        0.5 * (self.t1 + self.t2)
    }

    fn is_finite(&self) -> bool {
        self.t1.is_finite() && self.t2.is_finite() && self.time.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeaterCommand {
    pub q1: f64,
    pub q2: f64,
}

impl HeaterCommand {
    pub const OFF: HeaterCommand = HeaterCommand { q1: 0.0, q2: 0.0 };

    pub fn new(q1: f64, q2: f64) -> Self {
        Self { q1, q2 }
    }

    pub fn total(&self) -> f64 {
        self.q1 + self.q2
    }

    pub fn is_off(&self) -> bool {
        self.q1 == 0.0 && self.q2 == 0.0
    }

    /// Each component clamped into `limits`; NaN components become `lo`.
    pub fn clamped(&self, limits: &PowerLimits) -> Self {
        let c = |q: f64| if q.is_nan() { limits.lo } else { q.clamp(limits.lo, limits.hi) };
        Self::new(c(self.q1), c(self.q2))
    }
}

/// Inclusive per-heater power bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLimits {
    pub lo: f64,
    pub hi: f64,
}

impl Default for PowerLimits {
    fn default() -> Self {
        Self { lo: 0.0, hi: 0.3 }
    }
}

impl PowerLimits {
    pub fn contains(&self, q: f64) -> bool {
        q >= self.lo && q <= self.hi
    }

    pub fn admits(&self, cmd: &HeaterCommand) -> bool {
        self.contains(cmd.q1) && self.contains(cmd.q2)
    }

    pub fn check(&self, cmd: &HeaterCommand) -> Result<(), TwinError> {
        if self.admits(cmd) {
            Ok(())
        } else {
            Err(TwinError::CommandOutOfRange {
                q1: cmd.q1,
                q2: cmd.q2,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

/// Fan cooling one heater, modeled as a multiplier on its heat-transfer
/// coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceProfile {
    /// 1 or 2.
    pub fan_on_heater: u8,
    pub u_multiplier: f64,
    /// `[start, end)` in seconds; `None` means the whole run.
    pub active_window: Option<[f64; 2]>,
}

impl Default for DisturbanceProfile {
    fn default() -> Self {
        Self {
            fan_on_heater: 1,
            u_multiplier: 2.0,
            active_window: None,
        }
    }
}

impl DisturbanceProfile {
    pub fn none() -> Self {
        Self {
            u_multiplier: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TwinError> {
        if !(self.fan_on_heater == 1 || self.fan_on_heater == 2) {
            return Err(TwinError::InvalidParams(format!(
                "fan_on_heater must be 1 or 2, got {}",
                self.fan_on_heater
            )));
        }
        if !(self.u_multiplier.is_finite() && self.u_multiplier >= 1.0) {
            return Err(TwinError::InvalidParams(format!(
                "u_multiplier must be >= 1, got {}",
                self.u_multiplier
            )));
        }
        if let Some([a, b]) = self.active_window {
            if !(a <= b) {
                return Err(TwinError::InvalidParams(format!("window [{a}, {b}] is not ordered")));
            }
        }
        Ok(())
    }

    fn active_at(&self, time: f64) -> bool {
        match self.active_window {
            None => true,
            Some([a, b]) => time >= a && time < b,
        }
    }

    /// Effective heat-transfer coefficients `(heater 1, heater 2)` at `time`.
    pub fn effective_htc(&self, params: &TwinParams, time: f64) -> (f64, f64) {
        let base = params.htc;
        if !self.active_at(time) {
            return (base, base);
        }
        let boosted = base * self.u_multiplier;
        if self.fan_on_heater == 1 {
            (boosted, base)
        } else {
            (base, boosted)
        }
    }
}

/// Net heat flow into one heater, in watts.
pub fn net_heat_rate(temp: f64, q: f64, params: &TwinParams, u_eff: f64) -> f64 {
    let ta = params.ambient;
    let convection = u_eff * params.area * (temp - ta);
    let radiation =
        params.emissivity * params.stefan_boltzmann * params.area * (temp.powi(4) - ta.powi(4));
    q - convection - radiation
}

/// Steady-state temperature for constant heater power `q`, by bisection on
/// `[Ta, Ta + 200]`.
pub fn equilibrium_temperature(q: f64, params: &TwinParams, u_eff: f64) -> Result<f64, TwinError> {
    const RESIDUAL_W: f64 = 1e-9;
    let mut lo = params.ambient;
    let mut hi = params.ambient + 200.0;
    let f_lo = net_heat_rate(lo, q, params, u_eff);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    let f_hi = net_heat_rate(hi, q, params, u_eff);
    if f_lo.signum() == f_hi.signum() {
        return Err(TwinError::BracketFailure { lo, hi });
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let f_mid = net_heat_rate(mid, q, params, u_eff);
        if f_mid.abs() < RESIDUAL_W || mid == lo || mid == hi {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// One forward-Euler step spanning the whole horizon, without disturbance.
/// This is the shortcut a reasoning model takes when it "solves" the ODE in a
/// single finite difference; kept for side-by-side divergence reports.
pub fn naive_single_step(
    state: &TwinState,
    cmd: &HeaterCommand,
    horizon: f64,
    params: &TwinParams,
) -> (f64, f64) {
    let mc = params.thermal_mass();
    let t1 = state.t1 + horizon * net_heat_rate(state.t1, cmd.q1, params, params.htc) / mc;
    let t2 = state.t2 + horizon * net_heat_rate(state.t2, cmd.q2, params, params.htc) / mc;
    (t1, t2)
}

/// One sample of a run: the state at `time` and the command applied from
/// `time` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    #[serde(rename = "time_s")]
    pub time: f64,
    #[serde(rename = "t1_K")]
    pub t1: f64,
    #[serde(rename = "t2_K")]
    pub t2: f64,
    #[serde(rename = "q1_W")]
    pub q1: f64,
    #[serde(rename = "q2_W")]
    pub q2: f64,
}

impl Sample {
    pub fn new(state: &TwinState, cmd: &HeaterCommand) -> Self {
        Self {
            time: state.time,
            t1: state.t1,
            t2: state.t2,
            q1: cmd.q1,
            q2: cmd.q2,
        }
    }

    pub fn average(&self) -> f64 {
        0.5 * (self.t1 + self.t2)
    }

    pub fn state(&self) -> TwinState {
        TwinState {
            t1: self.t1,
            t2: self.t2,
            time: self.time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn averages(&self) -> Vec<f64> {
        self.samples.iter().map(Sample::average).collect()
    }

    /// Appends `other`, dropping its first sample when it repeats our last
    /// time stamp.
    pub fn extend_from(&mut self, other: &Trajectory) {
        let skip = match (self.samples.last(), other.samples.first()) {
            (Some(a), Some(b)) if a.time == b.time => 1,
            _ => 0,
        };
        if skip == 1 {
            // the joining sample carries the command actually applied next
            let n = self.samples.len();
            self.samples[n - 1] = other.samples[0];
        }
        self.samples.extend(other.samples.iter().skip(skip).copied());
    }

    /// CSV with header `time_s,t1_K,t2_K,q1_W,q2_W`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TwinError> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.samples {
            w.serialize(s).map_err(|e| TwinError::Csv(e.to_string()))?;
        }
        if self.samples.is_empty() {
            w.write_record(["time_s", "t1_K", "t2_K", "q1_W", "q2_W"])
                .map_err(|e| TwinError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| TwinError::Csv(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, TwinError> {
        let mut r = csv::Reader::from_reader(input);
        let samples = r
            .deserialize()
            .collect::<Result<Vec<Sample>, _>>()
            .map_err(|e| TwinError::Csv(e.to_string()))?;
        Ok(Self { samples })
    }
}

/// The plant model: parameters, fan disturbance and actuator limits.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twin {
    pub params: TwinParams,
    pub disturbance: DisturbanceProfile,
    pub limits: PowerLimits,
}

impl Twin {
    pub fn new(params: TwinParams, disturbance: DisturbanceProfile, limits: PowerLimits) -> Self {
        Self {
            params,
            disturbance,
            limits,
        }
    }

    pub fn validate(&self) -> Result<(), TwinError> {
        self.params.validate()?;
        self.disturbance.validate()?;
        if !(self.limits.lo >= 0.0 && self.limits.lo <= self.limits.hi && self.limits.hi.is_finite()) {
            return Err(TwinError::InvalidParams(format!(
                "power limits [{}, {}] must satisfy 0 <= lo <= hi",
                self.limits.lo, self.limits.hi
            )));
        }
        Ok(())
    }

    fn derivative(&self, t1: f64, t2: f64, time: f64, cmd: &HeaterCommand) -> (f64, f64) {
        let (u1, u2) = self.disturbance.effective_htc(&self.params, time);
        let mc = self.params.thermal_mass();
        (
            net_heat_rate(t1, cmd.q1, &self.params, u1) / mc,
            net_heat_rate(t2, cmd.q2, &self.params, u2) / mc,
        )
    }

    /// Classical fourth-order Runge-Kutta step of both heaters.
    pub fn step_rk4(
        &self,
        state: &TwinState,
        cmd: &HeaterCommand,
        dt: f64,
    ) -> Result<TwinState, TwinError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(TwinError::InvalidStep(format!("dt must be positive, got {dt}")));
        }
        self.limits.check(cmd)?;
        let t = state.time;
        let (k1a, k1b) = self.derivative(state.t1, state.t2, t, cmd);
        let (k2a, k2b) = self.derivative(
            state.t1 + 0.5 * dt * k1a,
            state.t2 + 0.5 * dt * k1b,
            t + 0.5 * dt,
            cmd,
        );
        let (k3a, k3b) = self.derivative(
            state.t1 + 0.5 * dt * k2a,
            state.t2 + 0.5 * dt * k2b,
            t + 0.5 * dt,
            cmd,
        );
        let (k4a, k4b) = self.derivative(state.t1 + dt * k3a, state.t2 + dt * k3b, t + dt, cmd);
        let stages = [k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b];
        if stages.iter().any(|k| !k.is_finite()) {
            return Err(TwinError::NonFiniteState { time: t });
        }
        let next = TwinState {
            t1: state.t1 + dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a),
            t2: state.t2 + dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b),
            time: t + dt,
        };
        if !next.is_finite() {
            return Err(TwinError::NonFiniteState { time: next.time });
        }
        Ok(next)
    }

    /// Holds `cmd` for `duration` seconds, stepping every `dt`. The returned
    /// trajectory starts with the initial state.
    pub fn simulate_interval(
        &self,
        state: &TwinState,
        cmd: &HeaterCommand,
        duration: f64,
        dt: f64,
    ) -> Result<Trajectory, TwinError> {
        let steps = step_count(duration, dt)?;
        self.limits.check(cmd)?;
        let mut samples = Vec::with_capacity(steps + 1);
        samples.push(Sample::new(state, cmd));
        let mut cur = *state;
        for k in 1..=steps {
            let mut next = self.step_rk4(&cur, cmd, dt)?;
            // keep the grid exact instead of accumulating rounding in time
            next.time = state.time + k as f64 * dt;
            samples.push(Sample::new(&next, cmd));
            cur = next;
        }
        Ok(Trajectory { samples })
    }

    /// Final state after holding `cmd` for `duration` seconds.
    pub fn predict(
        &self,
        state: &TwinState,
        cmd: &HeaterCommand,
        duration: f64,
        dt: f64,
    ) -> Result<TwinState, TwinError> {
        let traj = self.simulate_interval(state, cmd, duration, dt)?;
        Ok(traj.last().expect("at least the initial sample").state())
    }
}

/// Number of `dt` steps in `duration`; errors unless it is an integer.
pub fn step_count(duration: f64, dt: f64) -> Result<usize, TwinError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(TwinError::InvalidStep(format!("dt must be positive, got {dt}")));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(TwinError::InvalidStep(format!("duration must be non-negative, got {duration}")));
    }
    let n = (duration / dt).round();
    if ((n * dt) - duration).abs() > 1e-9 * duration.max(1.0) {
        return Err(TwinError::InvalidStep(format!(
            "duration {duration} s is not a multiple of dt {dt} s"
        )));
    }
    Ok(n as usize)
}
