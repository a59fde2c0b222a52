//! Kinematic stand-in for the human partner: an 18-keypoint skeleton whose
//! active wrist follows the rope end, plus the reaction torque on the motor.

use super::profile::{Arm, Condition, Motion, Speed};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

pub const N_KEYPOINTS: usize = 18;
pub const OBS_DIM: usize = N_KEYPOINTS * 3 + 6;

/// Keypoint names in observation order.
pub const KEYPOINTS: [&str; N_KEYPOINTS] = [
    "nose",
    "neck",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
    "r_eye",
    "l_eye",
    "r_ear",
    "l_ear",
];

/// Left/right keypoint pairs swapped by mirroring.
const MIRROR_PAIRS: [(usize, usize); 8] = [(2, 5), (3, 6), (4, 7), (8, 11), (9, 12), (10, 13), (14, 15), (16, 17)];

pub type Observation = [f64; OBS_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanParams {
    /// Standard deviation of additive observation noise.
    pub noise_std: f64,
    /// Amplitude of slow body sway in metres.
    pub sway_amp: f64,
    /// Hand lag time constant as `[slow, fast]`.
    pub lag: [f64; 2],
    /// Relative per-trajectory jitter of the lag.
    pub lag_jitter: f64,
    /// Wrist orbit radius for rotation as `[slow, fast]`.
    pub rotation_radius: [f64; 2],
    /// Wrist arc radius for swinging.
    pub swing_radius: f64,
    /// Relative per-trajectory jitter of the radii.
    pub radius_jitter: f64,
    pub rope_stiffness: f64,
    pub rope_damping: f64,
    pub rope_drag: f64,
}

impl Default for HumanParams {
    fn default() -> Self {
        HumanParams {
            noise_std: 0.01,
            sway_amp: 0.01,
            lag: [0.15, 0.1],
            lag_jitter: 0.2,
            rotation_radius: [0.12, 0.16],
            swing_radius: 0.3,
            radius_jitter: 0.1,
            rope_stiffness: 2.0,
            rope_damping: 0.2,
            rope_drag: 0.05,
        }
    }
}

impl HumanParams {
    pub fn validate(&self) -> crate::Result<()> {
        let nonneg = [
            self.noise_std,
            self.sway_amp,
            self.lag_jitter,
            self.radius_jitter,
            self.rope_stiffness,
            self.rope_damping,
            self.rope_drag,
        ];
        let pos = [self.lag[0], self.lag[1], self.rotation_radius[0], self.rotation_radius[1], self.swing_radius];
        if nonneg.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || pos.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(crate::PhriError::param("human parameters must be finite and non-negative"));
        }
        if self.lag_jitter >= 1.0 || self.radius_jitter >= 1.0 {
            return Err(crate::PhriError::param("jitter must be below 1"));
        }
        Ok(())
    }
}

/// Per-trajectory human state. Random draws depend only on the seed, never on
/// the condition, so left and right trajectories with one seed are mirrors.
#[derive(Debug, Clone)]
pub struct HumanModel {
    params: HumanParams,
    lag_scale: f64,
    radius_scale: f64,
    sway_freq: [f64; 2],
    sway_phase: [f64; 2],
    /// Hand phase in turns, lagging the motor angle.
    pub hand_phase: f64,
    pub hand_phase_dot: f64,
    prev_center: Option<[f64; 3]>,
}

impl HumanModel {
    pub fn new<R: Rng>(params: HumanParams, rng: &mut R, initial_phase: f64) -> Self {
        let u = |rng: &mut R| rng.random_range(-1.0..1.0);
        let lag_scale = 1.0 + params.lag_jitter * u(rng);
        let radius_scale = 1.0 + params.radius_jitter * u(rng);
        let sway_freq = [rng.random_range(0.1..0.3), rng.random_range(0.1..0.3)];
        let sway_phase = [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)];
        HumanModel {
            params,
            lag_scale,
            radius_scale,
            sway_freq,
            sway_phase,
            hand_phase: initial_phase,
            hand_phase_dot: 0.0,
            prev_center: None,
        }
    }

    fn lag(&self, speed: Speed) -> f64 {
        let base = match speed {
            Speed::Slow => self.params.lag[0],
            Speed::Fast => self.params.lag[1],
        };
        base * self.lag_scale
    }

    /// Reaction torque of the rope on the motor.
    pub fn load_torque(&self, theta: f64, theta_dot: f64) -> f64 {
        let p = &self.params;
        p.rope_stiffness * (self.hand_phase - theta) + p.rope_damping * (self.hand_phase_dot - theta_dot)
            - p.rope_drag * theta_dot * theta_dot.abs()
    }

    /// Lets the hand phase relax toward the motor angle.
    pub fn step(&mut self, theta: f64, speed: Speed, dt: f64) {
        let lag = self.lag(speed);
        let rate = (theta - self.hand_phase) / lag;
        // Exact first-order response keeps this stable for any dt.
        let a = 1.0 - (-dt / lag).exp();
        let next = self.hand_phase + a * (theta - self.hand_phase);
        self.hand_phase_dot = if dt > 0.0 { (next - self.hand_phase) / dt } else { rate };
        self.hand_phase = next;
    }

    /// Noise-free observation at time `t` for the given condition.
    pub fn observe(&mut self, condition: Condition, t: f64, dt: f64) -> Observation {
        let (mut obs, center) = self.canonical_pose(condition.motion, condition.speed, t);
        let vel = match self.prev_center {
            Some(prev) => [
                (center[0] - prev[0]) / dt,
                (center[1] - prev[1]) / dt,
                (center[2] - prev[2]) / dt,
            ],
            None => [0.0; 3],
        };
        self.prev_center = Some(center);
        obs[54..57].copy_from_slice(&center);
        obs[57..60].copy_from_slice(&vel);
        if condition.arm == Arm::Left {
            obs = mirror_observation(&obs);
        }
        obs
    }

    /// Pose with the right arm active; right-side keypoints sit at negative x.
    fn canonical_pose(&self, motion: Motion, speed: Speed, t: f64) -> (Observation, [f64; 3]) {
        let amp = self.params.sway_amp;
        let sway = [
            amp * (TAU * self.sway_freq[0] * t + self.sway_phase[0]).sin(),
            0.0,
            amp * (TAU * self.sway_freq[1] * t + self.sway_phase[1]).sin(),
        ];
        let psi = TAU * self.hand_phase;
        let (anchor, wrist_offset) = match motion {
            Motion::Rotation => {
                let r = match speed {
                    Speed::Slow => self.params.rotation_radius[0],
                    Speed::Fast => self.params.rotation_radius[1],
                } * self.radius_scale;
                ([-0.22, 1.25, 0.35], [r * psi.sin(), r * psi.cos(), 0.0])
            }
            Motion::Swing => {
                let r = self.params.swing_radius * self.radius_scale;
                let q = 0.5 * psi;
                ([-0.2, 1.0, 0.3], [r * q.sin(), 0.5 * r * (1.0 - q.cos()), 0.1 * r * q.sin()])
            }
        };
        let d = wrist_offset;
        let add = |p: [f64; 3], k: f64| -> [f64; 3] {
            [p[0] + sway[0] + k * d[0], p[1] + sway[1] + k * d[1], p[2] + sway[2] + k * d[2]]
        };
        let lean = match speed {
            Speed::Slow => 0.0,
            Speed::Fast => 0.02,
        };
        let mut pts = [[0.0; 3]; N_KEYPOINTS];
        pts[0] = add([0.0, 1.65, 0.08 + lean], 0.06);
        pts[1] = add([0.0, 1.5, lean], 0.05);
        let r_shoulder = add([-0.18, 1.45, lean], 0.15);
        let r_wrist = add([anchor[0], anchor[1], anchor[2] + lean], 1.0);
        pts[2] = r_shoulder;
        pts[4] = r_wrist;
        pts[3] = [
            0.5 * (r_shoulder[0] + r_wrist[0]) - 0.06,
            0.5 * (r_shoulder[1] + r_wrist[1]) - 0.06,
            0.5 * (r_shoulder[2] + r_wrist[2]) - 0.02,
        ];
        pts[5] = add([0.18, 1.45, lean], 0.05);
        pts[6] = add([0.2, 1.18, 0.02 + lean], -0.03);
        pts[7] = add([0.21, 0.93, 0.05 + lean], -0.05);
        pts[8] = add([-0.1, 1.0, 0.0], 0.03);
        pts[9] = add([-0.1, 0.55, 0.02], 0.01);
        pts[10] = [-0.1, 0.1, 0.0];
        pts[11] = add([0.1, 1.0, 0.0], 0.03);
        pts[12] = add([0.1, 0.55, 0.02], 0.01);
        pts[13] = [0.1, 0.1, 0.0];
        pts[14] = add([-0.035, 1.68, 0.07 + lean], 0.06);
        pts[15] = add([0.035, 1.68, 0.07 + lean], 0.06);
        pts[16] = add([-0.075, 1.66, lean], 0.06);
        pts[17] = add([0.075, 1.66, lean], 0.06);
        let mut obs = [0.0; OBS_DIM];
        for (i, p) in pts.iter().enumerate() {
            obs[3 * i..3 * i + 3].copy_from_slice(p);
        }
        let center = [
            0.5 * (pts[8][0] + pts[11][0]),
            0.5 * (pts[8][1] + pts[11][1]),
            0.5 * (pts[8][2] + pts[11][2]),
        ];
        (obs, center)
    }
}

/// Reflects an observation across the sagittal plane: negates every x
/// coordinate and swaps left/right keypoints.
pub fn mirror_observation(obs: &Observation) -> Observation {
    let mut out = *obs;
    for &(a, b) in &MIRROR_PAIRS {
        out[3 * a..3 * a + 3].copy_from_slice(&obs[3 * b..3 * b + 3]);
        out[3 * b..3 * b + 3].copy_from_slice(&obs[3 * a..3 * a + 3]);
    }
    for i in 0..N_KEYPOINTS + 2 {
        out[3 * i] = -out[3 * i];
    }
    out
}

/// Index of the x coordinate of the active wrist for an arm.
pub fn wrist_x_channel(arm: Arm) -> usize {
    match arm {
        Arm::Right => 3 * 4,
        Arm::Left => 3 * 7,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn mirror_is_involution() {
        let mut o = [0.0; OBS_DIM];
        for (i, v) in o.iter_mut().enumerate() {
            *v = i as f64 * 0.37 - 3.0;
        }
        assert_eq!(mirror_observation(&mirror_observation(&o)), o);
    }

    #[test]
    fn rotation_wrist_in_quadrature() {
        let params = HumanParams {
            sway_amp: 0.0,
            radius_jitter: 0.0,
            ..Default::default()
        };
        let mut h = HumanModel::new(params, &mut stream_rng(1, 0), 0.0);
        let c = Condition::new(Motion::Rotation, Arm::Right, Speed::Slow);
        for k in 0..8 {
            h.hand_phase = k as f64 / 8.0;
            let o = h.observe(c, 0.0, 1.0 / 30.0);
            let psi = TAU * h.hand_phase;
            assert!((o[12] - (-0.22 + 0.12 * psi.sin())).abs() < 1e-12);
            assert!((o[13] - (1.25 + 0.12 * psi.cos())).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_lag_converges() {
        let mut h = HumanModel::new(HumanParams::default(), &mut stream_rng(1, 0), 0.0);
        for _ in 0..200 {
            h.step(1.0, Speed::Fast, 1.0 / 30.0);
        }
        assert!((h.hand_phase - 1.0).abs() < 1e-9);
        assert!(h.load_torque(1.0, 0.0).abs() < 1e-8);
    }
}
