//! Admittance-controlled one-joint motor and a first-order plant.

use crate::error::{PhriError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotorParams {
    /// Virtual inertia.
    pub m: f64,
    /// Virtual damping.
    pub c: f64,
    /// Virtual spring.
    pub k: f64,
    /// Torque EMA smoothing factor.
    pub eta: f64,
    /// Anti-resistance gain.
    pub mu: f64,
    /// Torque constant.
    pub kappa: f64,
    pub dt: f64,
    /// Velocity tracking time constant of the plant.
    pub plant_tau: f64,
    /// Physical inertia of the plant.
    pub plant_inertia: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        MotorParams {
            m: 1.0,
            c: 50.0,
            k: 25.0,
            eta: 0.9,
            mu: 0.5,
            kappa: 1.0,
            dt: 1.0 / 30.0,
            plant_tau: 0.1,
            plant_inertia: 1.0,
        }
    }
}

impl MotorParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m", self.m),
            ("c", self.c),
            ("k", self.k),
            ("mu", self.mu),
            ("kappa", self.kappa),
            ("dt", self.dt),
            ("plant_tau", self.plant_tau),
            ("plant_inertia", self.plant_inertia),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PhriError::param(format!("motor parameter {name} must be positive, got {v}")));
            }
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(PhriError::param(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorState {
    pub theta: f64,
    pub theta_dot: f64,
    pub theta_cmd: f64,
    pub theta_dot_cmd: f64,
    pub tau_cmd: f64,
    /// Running average of the exerted torque.
    pub tau_bar: f64,
    /// Estimated external torque.
    pub tau: f64,
    pub current: f64,
}

impl MotorState {
    /// At rest at `theta`, with commands matching the state.
    pub fn at_rest(theta: f64) -> Self {
        MotorState {
            theta,
            theta_cmd: theta,
            ..Default::default()
        }
    }

    pub fn commands(&self) -> [f64; 3] {
        [self.theta_cmd, self.theta_dot_cmd, self.tau_cmd]
    }
}

/// Updates the torque average from a current reading and returns `(tau_bar, tau)`.
pub fn torque_estimate(state: &mut MotorState, current: f64, params: &MotorParams) -> (f64, f64) {
    let tau_i = params.kappa * current;
    state.current = current;
    state.tau_bar = params.eta * state.tau_bar + (1.0 - params.eta) * tau_i;
    state.tau = tau_i - state.tau_bar;
    (state.tau_bar, state.tau)
}

/// Acceleration rendered by the virtual mass-spring-damper.
pub fn admittance_accel(state: &MotorState, theta_ref: f64, theta_dot_ref: f64, params: &MotorParams) -> Result<f64> {
    if params.m == 0.0 {
        return Err(PhriError::param("virtual inertia must be nonzero"));
    }
    Ok((state.tau - params.c * (state.theta_dot - theta_dot_ref) - params.k * (state.theta - theta_ref)) / params.m)
}

/// Integrates the acceleration into new commands and returns the action:
/// the change of `[theta_cmd, theta_dot_cmd, tau_cmd]` since the last call.
pub fn command_step(state: &mut MotorState, accel: f64, params: &MotorParams) -> [f64; 3] {
    let prev = state.commands();
    state.theta_dot_cmd = state.theta_dot + accel * params.dt;
    state.theta_cmd = state.theta + state.theta_dot_cmd * params.dt;
    state.tau_cmd = -params.mu * state.tau;
    let now = state.commands();
    [now[0] - prev[0], now[1] - prev[1], now[2] - prev[2]]
}

/// Advances the plant by one step under the current commands and an external
/// load torque. The new current reflects the accelerating torque plus the load.
pub fn plant_step(state: &mut MotorState, load_torque: f64, params: &MotorParams) -> Result<()> {
    let dt = params.dt;
    let alpha = 1.0 - (-dt / params.plant_tau).exp();
    let j = params.plant_inertia;
    let v0 = state.theta_dot;
    let v1 = v0 + alpha * (state.theta_dot_cmd - v0) + dt * (load_torque + state.tau_cmd) / j;
    let theta = state.theta + v1 * dt;
    let current = (j * (v1 - v0) / dt + load_torque) / params.kappa;
    if !(v1.is_finite() && theta.is_finite() && current.is_finite()) {
        return Err(PhriError::numeric(format!(
            "plant diverged (theta={theta}, theta_dot={v1}, load={load_torque})"
        )));
    }
    state.theta_dot = v1;
    state.theta = theta;
    state.current = current;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ema_single_step() {
        let p = MotorParams::default();
        let mut s = MotorState::default();
        let (bar, tau) = torque_estimate(&mut s, 1.0, &p);
        assert!((bar - 0.1).abs() < 1e-15);
        assert!((tau - 0.9).abs() < 1e-15);
    }

    #[test]
    fn admittance_examples() {
        let p = MotorParams::default();
        let mut s = MotorState::default();
        assert_eq!(admittance_accel(&s, 0.0, 0.0, &p).unwrap(), 0.0);
        s.tau = 1.0;
        assert_eq!(admittance_accel(&s, 0.0, 0.0, &p).unwrap(), 1.0);
        s.tau = 0.0;
        s.theta = 0.1;
        assert!((admittance_accel(&s, 0.0, 0.0, &p).unwrap() + 2.5).abs() < 1e-12);
        let zero_m = MotorParams { m: 0.0, ..p };
        assert!(admittance_accel(&s, 0.0, 0.0, &zero_m).is_err());
    }

    #[test]
    fn command_examples() {
        let p = MotorParams::default();
        let mut s = MotorState::at_rest(0.3);
        assert_eq!(command_step(&mut s, 0.0, &p), [0.0; 3]);
        s.tau = 1.0;
        command_step(&mut s, 0.0, &p);
        assert_eq!(s.tau_cmd, -0.5);
        let mut s = MotorState {
            theta_dot: 1.0,
            ..Default::default()
        };
        command_step(&mut s, 0.0, &p);
        assert!((s.theta_cmd - s.theta - 1.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn plant_fixed_point_and_settling() {
        let p = MotorParams::default();
        let mut s = MotorState::at_rest(0.25);
        plant_step(&mut s, 0.0, &p).unwrap();
        assert_eq!(s.theta, 0.25);
        assert_eq!(s.theta_dot, 0.0);

        let mut s = MotorState::default();
        s.theta_dot_cmd = 1.0;
        let n = (5.0 * p.plant_tau / p.dt).ceil() as usize;
        for _ in 0..n {
            plant_step(&mut s, 0.0, &p).unwrap();
        }
        assert!((s.theta_dot - 1.0).abs() < 0.01, "{}", s.theta_dot);
    }

    #[test]
    fn validate_rejects_bad_eta() {
        assert!(MotorParams { eta: 1.0, ..Default::default() }.validate().is_err());
        assert!(MotorParams::default().validate().is_ok());
    }
}
