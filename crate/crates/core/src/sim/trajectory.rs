//! Closed-loop rollout of controller, plant and human observer.

use super::human::{HumanModel, HumanParams, OBS_DIM};
use super::motor::{admittance_accel, command_step, plant_step, torque_estimate, MotorParams, MotorState};
use super::profile::{reference_angle_exact, reference_velocity, Arm, Condition, Motion, ProfileParams, Speed};
use crate::error::{PhriError, Result};
use crate::rng::stream_rng;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const ACTION_DIM: usize = 3;

const STREAM_HUMAN: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_TIME: u64 = 3;
const STREAM_SCHEDULE: u64 = 4;

/// How conditions are laid out within one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// One condition for the whole trajectory.
    #[default]
    Single,
    /// Four equal phases covering every motion/speed pair for one arm.
    MultiPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub condition: Condition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub motor: MotorParams,
    pub profile: ProfileParams,
    pub human: HumanParams,
    /// Closed-loop steps simulated and discarded before recording.
    pub warmup: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            motor: MotorParams::default(),
            profile: ProfileParams::default(),
            human: HumanParams::default(),
            warmup: 30,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.motor.validate()?;
        self.profile.validate()?;
        self.human.validate()
    }
}

/// Recorded observation/action series with condition labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub seed: u64,
    pub dt: f64,
    pub segments: Vec<Segment>,
    pub t: Vec<f64>,
    /// `len × 60`
    pub obs: Array2<f64>,
    /// `len × 3`
    pub actions: Array2<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Condition of the first segment.
    pub fn condition(&self) -> Condition {
        self.segments[0].condition
    }

    pub fn condition_at(&self, step: usize) -> Condition {
        self.segments
            .iter()
            .rev()
            .find(|s| s.start <= step)
            .unwrap_or(&self.segments[0])
            .condition
    }
}

/// Internal signals of one recorded step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub theta: f64,
    pub theta_dot: f64,
    pub theta_ref: f64,
    pub theta_dot_ref: f64,
    /// Commands after this step's action.
    pub commands: [f64; 3],
    pub tau: f64,
    pub load: f64,
    pub hand_phase: f64,
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub records: Vec<StepRecord>,
    /// Commands in force just before the first recorded step.
    pub initial_commands: [f64; 3],
}

/// Segment plan for a trajectory whose first (or only) condition is given.
pub fn plan_segments(condition: Condition, schedule: Schedule, n_steps: usize, seed: u64) -> Vec<Segment> {
    match schedule {
        Schedule::Single => vec![Segment { start: 0, condition }],
        Schedule::MultiPhase => {
            let mut rest: Vec<(Motion, Speed)> = [
                (Motion::Rotation, Speed::Slow),
                (Motion::Rotation, Speed::Fast),
                (Motion::Swing, Speed::Slow),
                (Motion::Swing, Speed::Fast),
            ]
            .into_iter()
            .filter(|&(m, s)| !(m == condition.motion && s == condition.speed))
            .collect();
            rest.shuffle(&mut stream_rng(seed, STREAM_SCHEDULE));
            let arm: Arm = condition.arm;
            std::iter::once((condition.motion, condition.speed))
                .chain(rest)
                .enumerate()
                .map(|(i, (motion, speed))| Segment {
                    start: i * n_steps / 4,
                    condition: Condition { motion, arm, speed },
                })
                .collect()
        }
    }
}

pub fn generate_trajectory(condition: Condition, seed: u64, n_steps: usize, cfg: &GeneratorConfig) -> Result<Trajectory> {
    let segs = plan_segments(condition, Schedule::Single, n_steps, seed);
    Ok(simulate(&segs, seed, n_steps, cfg)?.trajectory)
}

/// Runs the closed loop and records `n_steps` (observation, action) pairs.
///
/// Per step: reference, torque estimate from the last current, admittance,
/// commands (the action), observation, then plant and human updates.
pub fn simulate(segments: &[Segment], seed: u64, n_steps: usize, cfg: &GeneratorConfig) -> Result<Rollout> {
    if n_steps == 0 {
        return Err(PhriError::param("trajectory needs at least one step"));
    }
    if segments.is_empty() || segments[0].start != 0 {
        return Err(PhriError::param("segment plan must start at step 0"));
    }
    cfg.validate()?;
    let dt = cfg.motor.dt;
    let first = segments[0].condition;
    let period = cfg.profile.profile(first.motion, first.speed).period();
    let t0 = stream_rng(seed, STREAM_TIME).random_range(0.0..period);
    let first_profile = cfg.profile.profile(first.motion, first.speed);
    // Start on the reference so swings stay centred on the rest angle.
    let mut theta_ref = reference_angle_exact(&first_profile, t0);
    let mut human = HumanModel::new(cfg.human, &mut stream_rng(seed, STREAM_HUMAN), theta_ref);
    let mut noise_rng = stream_rng(seed, STREAM_NOISE);

    let mut motor = MotorState::at_rest(theta_ref);
    motor.theta_dot = reference_velocity(&first_profile, t0);
    motor.theta_dot_cmd = motor.theta_dot;
    let mut t_profile = t0;
    let mut seg_idx = 0;

    let total = cfg.warmup + n_steps;
    let mut obs = Array2::zeros((n_steps, OBS_DIM));
    let mut actions = Array2::zeros((n_steps, ACTION_DIM));
    let mut times = Vec::with_capacity(n_steps);
    let mut records = Vec::with_capacity(n_steps);
    let mut initial_commands = [0.0; 3];

    for k in 0..total {
        let rec = k.checked_sub(cfg.warmup);
        if let Some(r) = rec {
            if seg_idx + 1 < segments.len() && segments[seg_idx + 1].start == r {
                seg_idx += 1;
                t_profile = 0.0;
            }
        }
        let cond = segments[seg_idx].condition;
        let profile = cfg.profile.profile(cond.motion, cond.speed);
        let theta_dot_ref = reference_velocity(&profile, t_profile);

        let current = motor.current;
        torque_estimate(&mut motor, current, &cfg.motor);
        let accel = admittance_accel(&motor, theta_ref, theta_dot_ref, &cfg.motor)?;
        if rec == Some(0) {
            initial_commands = motor.commands();
        }
        let action = command_step(&mut motor, accel, &cfg.motor);

        let t = k as f64 * dt;
        let clean = human.observe(cond, t, dt);
        if let Some(r) = rec {
            times.push(r as f64 * dt);
            for (j, v) in clean.iter().enumerate() {
                let e: f64 = StandardNormal.sample(&mut noise_rng);
                obs[[r, j]] = v + cfg.human.noise_std * e;
            }
            for (j, a) in action.iter().enumerate() {
                actions[[r, j]] = *a;
            }
        }

        let load = human.load_torque(motor.theta, motor.theta_dot);
        if rec.is_some() {
            records.push(StepRecord {
                theta: motor.theta,
                theta_dot: motor.theta_dot,
                theta_ref,
                theta_dot_ref,
                commands: motor.commands(),
                tau: motor.tau,
                load,
                hand_phase: human.hand_phase,
            });
        }
        plant_step(&mut motor, load, &cfg.motor)
            .map_err(|e| PhriError::numeric(format!("step {k} of trajectory seed {seed}: {e}")))?;
        human.step(motor.theta, cond.speed, dt);
        theta_ref += theta_dot_ref * dt;
        t_profile += dt;
    }

    if obs.iter().chain(actions.iter()).any(|v| !v.is_finite()) {
        return Err(PhriError::numeric(format!("non-finite sample in trajectory seed {seed}")));
    }
    let trajectory = Trajectory {
        id: first.label(),
        seed,
        dt,
        segments: segments.to_vec(),
        t: times,
        obs,
        actions,
    };
    Ok(Rollout {
        trajectory,
        records,
        initial_commands,
    })
}

/// Amplitude spectrum of one channel, mean removed.
pub fn channel_spectrum(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    let centred: Vec<f64> = x.iter().map(|v| v - mean).collect();
    crate::crc::amplitude_spectrum(&centred)
}

/// Frequency in Hz of the largest non-DC spectral bin.
pub fn dominant_frequency(x: &[f64], dt: f64) -> f64 {
    let spec = channel_spectrum(x);
    let (k, _) = spec
        .iter()
        .enumerate()
        .skip(1)
        .fold((0, f64::MIN), |best, (k, &a)| if a > best.1 { (k, a) } else { best });
    k as f64 / (x.len() as f64 * dt)
}

/// Largest non-DC spectral amplitude of a channel.
pub fn peak_amplitude(x: &[f64]) -> f64 {
    channel_spectrum(x).iter().skip(1).fold(0.0, |m, &a| m.max(a))
}

/// Peak-to-peak range of a channel.
pub fn channel_range(x: &[f64]) -> f64 {
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_steps_rejected() {
        let c = Condition::all()[0];
        assert!(generate_trajectory(c, 1, 0, &GeneratorConfig::default()).is_err());
    }

    #[test]
    fn multiphase_plan_covers_all_pairs() {
        let c = Condition::all()[5];
        let segs = plan_segments(c, Schedule::MultiPhase, 900, 3);
        assert_eq!(segs.len(), 4);
        assert_eq!(segs[0].condition, c);
        assert_eq!(segs.iter().map(|s| s.start).collect::<Vec<_>>(), vec![0, 225, 450, 675]);
        let mut idx: Vec<usize> = segs.iter().map(|s| s.condition.index()).collect();
        idx.sort();
        idx.dedup();
        assert_eq!(idx.len(), 4);
        assert!(segs.iter().all(|s| s.condition.arm == c.arm));
    }

    #[test]
    fn shape_and_duration() {
        let c = Condition::all()[0];
        let tr = generate_trajectory(c, 9, 900, &GeneratorConfig::default()).unwrap();
        assert_eq!(tr.obs.dim(), (900, OBS_DIM));
        assert_eq!(tr.actions.dim(), (900, ACTION_DIM));
        assert!((tr.t[899] + tr.dt - 30.0).abs() < 1e-9);
    }
}
