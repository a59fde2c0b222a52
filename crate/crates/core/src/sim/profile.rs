//! Reference velocity profiles and experimental conditions.
//!
//! Angles are in turns and velocities in turns per second.

use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Motion {
    Rotation,
    Swing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speed {
    Slow,
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub motion: Motion,
    pub arm: Arm,
    pub speed: Speed,
}

impl Condition {
    pub const COUNT: usize = 8;

    pub fn new(motion: Motion, arm: Arm, speed: Speed) -> Self {
        Condition { motion, arm, speed }
    }

    /// All eight conditions in label-index order.
    pub fn all() -> [Condition; 8] {
        let mut out = [Condition::new(Motion::Rotation, Arm::Left, Speed::Slow); 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = Condition::from_index(i).unwrap();
        }
        out
    }

    pub fn index(&self) -> usize {
        let m = match self.motion {
            Motion::Rotation => 0,
            Motion::Swing => 1,
        };
        let a = match self.arm {
            Arm::Left => 0,
            Arm::Right => 1,
        };
        let s = match self.speed {
            Speed::Slow => 0,
            Speed::Fast => 1,
        };
        m * 4 + a * 2 + s
    }

    pub fn from_index(i: usize) -> Option<Self> {
        if i >= 8 {
            return None;
        }
        let motion = if i / 4 == 0 { Motion::Rotation } else { Motion::Swing };
        let arm = if (i / 2) % 2 == 0 { Arm::Left } else { Arm::Right };
        let speed = if i % 2 == 0 { Speed::Slow } else { Speed::Fast };
        Some(Condition { motion, arm, speed })
    }

    /// Short label such as `rotation-left-slow`.
    pub fn label(&self) -> String {
        let m = match self.motion {
            Motion::Rotation => "rotation",
            Motion::Swing => "swing",
        };
        let a = match self.arm {
            Arm::Left => "left",
            Arm::Right => "right",
        };
        let s = match self.speed {
            Speed::Slow => "slow",
            Speed::Fast => "fast",
        };
        format!("{m}-{a}-{s}")
    }

    pub fn parse(label: &str) -> Option<Self> {
        Condition::all().into_iter().find(|c| c.label() == label)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Timing and speed parameters for both motions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileParams {
    pub t_a: f64,
    pub t_c: f64,
    pub t_s: f64,
    /// Maximum rotation velocity as `[slow, fast]`.
    pub v_rotation: [f64; 2],
    /// Maximum swing velocity as `[slow, fast]`.
    pub v_swing: [f64; 2],
}

impl Default for ProfileParams {
    fn default() -> Self {
        ProfileParams {
            t_a: 1.0,
            t_c: 4.0,
            t_s: 0.6 * std::f64::consts::PI,
            v_rotation: [0.8, 1.2],
            v_swing: [0.5, 1.0],
        }
    }
}

impl ProfileParams {
    pub fn profile(&self, motion: Motion, speed: Speed) -> VelocityProfile {
        let k = match speed {
            Speed::Slow => 0,
            Speed::Fast => 1,
        };
        let v = match motion {
            Motion::Rotation => self.v_rotation[k],
            Motion::Swing => self.v_swing[k],
        };
        VelocityProfile {
            motion,
            t_a: self.t_a,
            t_c: self.t_c,
            t_s: self.t_s,
            v,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let all = [
            self.t_a,
            self.t_c,
            self.t_s,
            self.v_rotation[0],
            self.v_rotation[1],
            self.v_swing[0],
            self.v_swing[1],
        ];
        if all.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(crate::PhriError::param("profile parameters must be positive and finite"));
        }
        Ok(())
    }
}

/// A single motion profile with its maximum velocity resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityProfile {
    pub motion: Motion,
    pub t_a: f64,
    pub t_c: f64,
    pub t_s: f64,
    pub v: f64,
}

impl VelocityProfile {
    pub fn period(&self) -> f64 {
        match self.motion {
            Motion::Rotation => 4.0 * self.t_a + 2.0 * self.t_c,
            Motion::Swing => self.t_s,
        }
    }
}

/// Reference velocity at time `t >= 0`. The trapezoid repeats with period
/// `4 t_a + 2 t_c`.
pub fn reference_velocity(p: &VelocityProfile, t: f64) -> f64 {
    match p.motion {
        Motion::Rotation => {
            let (ta, tc, v) = (p.t_a, p.t_c, p.v);
            let t = t.rem_euclid(p.period());
            if t < ta {
                v * t / ta
            } else if t <= ta + tc {
                v
            } else if t < 3.0 * ta + tc {
                v - v * (t - (ta + tc)) / ta
            } else if t <= 3.0 * ta + 2.0 * tc {
                -v
            } else {
                -v + v * (t - (3.0 * ta + 2.0 * tc)) / ta
            }
        }
        Motion::Swing => p.v * (2.0 * std::f64::consts::PI * t / p.t_s).cos(),
    }
}

/// Closed-form integral of the reference velocity over `[0, t]`.
pub fn reference_angle_exact(p: &VelocityProfile, t: f64) -> f64 {
    match p.motion {
        Motion::Rotation => {
            let period = p.period();
            let cycles = (t / period).floor();
            // Net area over a full cycle is zero.
            let r = t - cycles * period;
            let (ta, tc, v) = (p.t_a, p.t_c, p.v);
            let mut area = 0.0;
            let seg = |a: f64, b: f64| (r.min(b) - a).max(0.0);
            // ramp up
            let d = seg(0.0, ta);
            area += v * d * d / (2.0 * ta);
            area += v * seg(ta, ta + tc);
            let d = seg(ta + tc, 3.0 * ta + tc);
            area += v * d - v * d * d / (2.0 * ta);
            area -= v * seg(3.0 * ta + tc, 3.0 * ta + 2.0 * tc);
            let d = seg(3.0 * ta + 2.0 * tc, period);
            area += -v * d + v * d * d / (2.0 * ta);
            area
        }
        Motion::Swing => {
            let w = 2.0 * std::f64::consts::PI / p.t_s;
            p.v * (w * t).sin() / w
        }
    }
}

/// Euler-integrated reference. Returns `steps + 1` angles starting at zero
/// and the `steps` velocities sampled at `k * dt`.
pub fn integrate_reference(p: &VelocityProfile, duration: f64, dt: f64) -> crate::Result<(Vec<f64>, Vec<f64>)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(crate::PhriError::param(format!("time step must be positive, got {dt}")));
    }
    let steps = (duration / dt).round().max(0.0) as usize;
    let mut theta = Vec::with_capacity(steps + 1);
    let mut vel = Vec::with_capacity(steps);
    let mut acc = 0.0;
    theta.push(acc);
    for k in 0..steps {
        let v = reference_velocity(p, k as f64 * dt);
        acc += v * dt;
        vel.push(v);
        theta.push(acc);
    }
    Ok((theta, vel))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot(v: f64) -> VelocityProfile {
        ProfileParams {
            v_rotation: [v, v],
            ..Default::default()
        }
        .profile(Motion::Rotation, Speed::Slow)
    }

    #[test]
    fn condition_index_round_trip() {
        for (i, c) in Condition::all().iter().enumerate() {
            assert_eq!(c.index(), i);
            assert_eq!(Condition::parse(&c.label()), Some(*c));
        }
        assert_eq!(Condition::from_index(8), None);
    }

    #[test]
    fn trapezoid_cases() {
        let p = rot(0.8);
        assert_eq!(reference_velocity(&p, 0.0), 0.0);
        assert_eq!(reference_velocity(&p, 0.5), 0.4);
        assert_eq!(reference_velocity(&p, 1.0), 0.8);
        assert_eq!(reference_velocity(&p, 5.0), 0.8);
        assert_eq!(reference_velocity(&p, 6.0), 0.0);
        assert_eq!(reference_velocity(&p, 7.0), -0.8);
        assert_eq!(reference_velocity(&p, 11.0), -0.8);
        assert_eq!(reference_velocity(&p, 11.5), -0.4);
        assert_eq!(reference_velocity(&p, 12.0), 0.0);
        assert_eq!(reference_velocity(&p, 13.0), 0.8);
    }

    #[test]
    fn swing_zeros_and_peak() {
        let p = ProfileParams::default().profile(Motion::Swing, Speed::Slow);
        assert_eq!(reference_velocity(&p, 0.0), 0.5);
        assert!(reference_velocity(&p, p.t_s / 4.0).abs() < 1e-15);
    }

    #[test]
    fn exact_angle_over_cycle_is_zero() {
        let p = rot(1.2);
        assert!(reference_angle_exact(&p, 12.0).abs() < 1e-12);
        assert!((reference_angle_exact(&p, 5.0) - (0.6 + 4.8)).abs() < 1e-12);
        assert!((reference_angle_exact(&p, 6.0) - (0.6 + 4.8 + 0.6)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_dt() {
        assert!(integrate_reference(&rot(1.0), 1.0, 0.0).is_err());
    }
}
