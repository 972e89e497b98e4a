use serde::{Deserialize, Serialize};

use crate::twin::HeaterCommand;

use super::ControlError;

/// Gains and output bounds for the total heater power of both heaters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    /// W/K
    pub kp: f64,
    /// W/(K·s)
    pub ki: f64,
    /// W·s/K
    pub kd: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for PidGains {
    /// Tuned once against the default twin with the fan on heater 1.
    fn default() -> Self {
        Self {
            kp: 0.3,
            ki: 0.01,
            kd: 0.0,
            u_min: 0.0,
            u_max: 0.6,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        let gains_ok = [self.kp, self.ki, self.kd].iter().all(|g| g.is_finite() && *g >= 0.0);
        if !gains_ok {
            return Err(ControlError::InvalidConfig(format!(
                "PID gains must be finite and non-negative: {self:?}"
            )));
        }
        if !(self.u_min < self.u_max) {
            return Err(ControlError::InvalidConfig(format!(
                "PID bounds [{}, {}] are not ordered",
                self.u_min, self.u_max
            )));
        }
        Ok(())
    }

    /// Largest magnitude the integral state may reach; beyond it the integral
    /// term alone would exceed the output range.
    pub fn integral_limit(&self) -> f64 {
        if self.ki == 0.0 {
            f64::INFINITY
        } else {
            self.u_min.abs().max(self.u_max.abs()) / self.ki
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    /// K·s
    pub integral: f64,
    /// K
    pub prev_error: f64,
    pub initialized: bool,
}

/// One PID update with clamping anti-windup.
///
/// The integral is advanced first; the advance is discarded if it would push
/// an already saturated output further past its bound. The integral is also
/// hard-limited to [`PidGains::integral_limit`].
pub fn pid_update(gains: &PidGains, state: PidState, error: f64, dt: f64) -> (f64, PidState) {
    debug_assert!(dt > 0.0);
    let derivative = if state.initialized {
        (error - state.prev_error) / dt
    } else {
        0.0
    };
    let limit = gains.integral_limit();
    let candidate = (state.integral + error * dt).clamp(-limit, limit);
    let raw = |integral: f64| gains.kp * error + gains.ki * integral + gains.kd * derivative;
    let u_candidate = raw(candidate);
    let winding_up = (u_candidate > gains.u_max && error > 0.0) || (u_candidate < gains.u_min && error < 0.0);
    let integral = if winding_up { state.integral } else { candidate };
    let u = raw(integral).clamp(gains.u_min, gains.u_max);
    (
        u,
        PidState {
            integral,
            prev_error: error,
            initialized: true,
        },
    )
}

/// Splits a total power evenly across the two heaters.
pub fn split_command(u_total: f64, per_heater_max: f64) -> Result<HeaterCommand, ControlError> {
    if !(u_total >= 0.0 && u_total <= 2.0 * per_heater_max) {
        return Err(ControlError::OutOfRange(format!(
            "total {u_total} W outside [0, {}] W",
            2.0 * per_heater_max
        )));
    }
    let half = (u_total / 2.0).clamp(0.0, per_heater_max);
    Ok(HeaterCommand::new(half, half))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_zero_output() {
        let (u, _) = pid_update(&PidGains::default(), PidState::default(), 0.0, 1.0);
        assert_eq!(u, 0.0);
        let g = PidGains { u_min: 0.1, ..PidGains::default() };
        let (u, _) = pid_update(&g, PidState::default(), 0.0, 1.0);
        assert_eq!(u, 0.1);
    }

    #[test]
    fn pure_proportional() {
        let g = PidGains { kp: 1.0, ki: 0.0, kd: 0.0, u_min: 0.0, u_max: 0.6 };
        let (u, _) = pid_update(&g, PidState::default(), 0.2, 1.0);
        assert_eq!(u, 0.2);
    }

    #[test]
    fn integral_closed_form() {
        let g = PidGains { kp: 0.0, ki: 0.01, kd: 0.0, u_min: 0.0, u_max: 0.6 };
        let mut s = PidState::default();
        let mut u = 0.0;
        for _ in 0..10 {
            (u, s) = pid_update(&g, s, 1.0, 1.0);
        }
        assert!((u - 0.1).abs() < 1e-12);
    }

    #[test]
    fn derivative_is_zero_on_first_call() {
        let g = PidGains { kp: 0.0, ki: 0.0, kd: 1.0, u_min: -10.0, u_max: 10.0 };
        let (u0, s) = pid_update(&g, PidState::default(), 3.0, 1.0);
        assert_eq!(u0, 0.0);
        let (u1, _) = pid_update(&g, s, 4.0, 0.5);
        assert_eq!(u1, 2.0);
    }

    #[test]
    fn integral_freezes_while_saturated() {
        let g = PidGains::default();
        let mut s = PidState::default();
        for _ in 0..10_000 {
            let (u, next) = pid_update(&g, s, 50.0, 1.0);
            assert_eq!(u, g.u_max);
            s = next;
        }
        // kp·e alone saturates, so nothing is ever accumulated
        assert_eq!(s.integral, 0.0);
        // driving below u_min with a negative error is also wind-up
        let (u, s2) = pid_update(&g, s, -1.0, 1.0);
        assert_eq!((u, s2.integral), (0.0, 0.0));
        let (_, s3) = pid_update(&g, s2, 1.0, 1.0);
        assert_eq!(s3.integral, 1.0);
    }

    #[test]
    fn integral_never_exceeds_limit() {
        let g = PidGains { kp: 0.0, ki: 0.002, kd: 0.0, u_min: 0.0, u_max: 0.6 };
        let mut s = PidState::default();
        for _ in 0..100_000 {
            s = pid_update(&g, s, 5.0, 1.0).1;
            assert!(s.integral.abs() <= g.integral_limit());
        }
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_command(0.4, 0.3).unwrap(), HeaterCommand::new(0.2, 0.2));
        assert_eq!(split_command(0.0, 0.3).unwrap(), HeaterCommand::OFF);
        assert!(matches!(split_command(0.7, 0.3), Err(ControlError::OutOfRange(_))));
        assert!(split_command(-0.1, 0.3).is_err());
        assert!(split_command(f64::NAN, 0.3).is_err());
    }
}
