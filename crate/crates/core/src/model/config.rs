use crate::crc::InputScaling;
use crate::error::{PhriError, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Ablation switches: explicit dynamics (D), auxiliary policy loss (A) and
/// complex reservoir (C).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Flags {
    pub dynamics: bool,
    pub aux_policy: bool,
    pub complex: bool,
}

impl Flags {
    pub const FULL: Flags = Flags {
        dynamics: true,
        aux_policy: true,
        complex: true,
    };
    pub const CONVENTIONAL: Flags = Flags {
        dynamics: false,
        aux_policy: false,
        complex: false,
    };

    /// All eight combinations, full model first and conventional last.
    pub fn all() -> [Flags; 8] {
        let mut out = [Flags::FULL; 8];
        for (i, f) in out.iter_mut().enumerate() {
            *f = Flags {
                dynamics: i & 4 == 0,
                aux_policy: i & 2 == 0,
                complex: i & 1 == 0,
            };
        }
        out
    }

    /// Label such as `+D-A+C`.
    pub fn label(&self) -> String {
        let s = |on: bool, c: char| format!("{}{c}", if on { '+' } else { '-' });
        format!("{}{}{}", s(self.dynamics, 'D'), s(self.aux_policy, 'A'), s(self.complex, 'C'))
    }

    /// File-system friendly label such as `pD-mA-pC`.
    pub fn slug(&self) -> String {
        let s = |on: bool, c: char| format!("{}{c}", if on { 'p' } else { 'm' });
        format!("{}-{}-{}", s(self.dynamics, 'D'), s(self.aux_policy, 'A'), s(self.complex, 'C'))
    }

    pub fn parse(s: &str) -> Result<Flags> {
        let b = s.trim().as_bytes();
        if b.len() != 6 {
            return Err(PhriError::param(format!("bad ablation label {s:?}; expected e.g. +D+A+C")));
        }
        let mut flags = Flags::FULL;
        for (i, letter) in [b'D', b'A', b'C'].iter().enumerate() {
            let (sign, l) = (b[2 * i], b[2 * i + 1]);
            if l.to_ascii_uppercase() != *letter || (sign != b'+' && sign != b'-') {
                return Err(PhriError::param(format!("bad ablation label {s:?}; expected e.g. +D+A+C")));
            }
            let on = sign == b'+';
            match i {
                0 => flags.dynamics = on,
                1 => flags.aux_policy = on,
                _ => flags.complex = on,
            }
        }
        Ok(flags)
    }

    /// The policy is part of the loss when either D or A is on.
    pub fn uses_policy(&self) -> bool {
        self.dynamics || self.aux_policy
    }
}

impl fmt::Display for Flags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Which latent value advances the state history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryInput {
    #[default]
    Sample,
    Mean,
}

/// Wiring of the next state when explicit dynamics are off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisabledDynamics {
    /// Decode directly from `s_t`.
    #[default]
    Bypass,
    /// Feed the all-ones action into the dynamics network.
    OnesAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub flags: Flags,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub latent_dim: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub n_rc: usize,
    /// Hidden width of every fully connected stack.
    pub width: usize,
    /// Output size of the history projections.
    pub proj_dim: usize,
    pub lr: f64,
    /// Trajectories per batch.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Optimizer step every this many time steps; 0 means once per batch.
    pub update_every: usize,
    pub clip_norm: f64,
    pub spectral_target: f64,
    pub input_scaling: InputScaling,
    pub history_input: HistoryInput,
    pub disabled_dynamics: DisabledDynamics,
    /// Dynamics consume the dataset action instead of a policy sample.
    pub teacher_forcing: bool,
    /// Dynamics predict an increment added to `s_t`.
    pub residual_dynamics: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            flags: Flags::FULL,
            beta1: 0.1,
            beta2: 0.1,
            beta3: 1.0,
            latent_dim: 3,
            obs_dim: crate::sim::OBS_DIM,
            action_dim: crate::sim::ACTION_DIM,
            n_rc: 1000,
            width: 100,
            proj_dim: 16,
            lr: 1e-4,
            batch_size: 44,
            epochs: 100,
            seed: 0,
            update_every: 0,
            clip_norm: 10.0,
            spectral_target: 0.9,
            input_scaling: InputScaling::default(),
            history_input: HistoryInput::default(),
            disabled_dynamics: DisabledDynamics::default(),
            teacher_forcing: false,
            residual_dynamics: true,
        }
    }
}

impl ModelConfig {
    /// Reduced settings for single-core runs on the desk-scale dataset.
    pub fn desk() -> Self {
        ModelConfig {
            n_rc: 200,
            width: 64,
            lr: 1e-3,
            batch_size: 8,
            epochs: 30,
            update_every: 10,
            ..ModelConfig::default()
        }
    }

    pub fn with_flags(&self, flags: Flags) -> Self {
        ModelConfig { flags, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("latent_dim", self.latent_dim),
            ("obs_dim", self.obs_dim),
            ("action_dim", self.action_dim),
            ("n_rc", self.n_rc),
            ("width", self.width),
            ("proj_dim", self.proj_dim),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(PhriError::param(format!("{name} must be at least 1")));
            }
        }
        if self.width < 2 {
            return Err(PhriError::param("width must be at least 2 for layer normalization"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2), ("beta3", self.beta3)] {
            if !(b.is_finite() && b >= 0.0) {
                return Err(PhriError::param(format!("{name} must be non-negative, got {b}")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(PhriError::param(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(PhriError::param("clip_norm must be positive"));
        }
        if !(self.spectral_target > 0.0 && self.spectral_target < 1.0) {
            return Err(PhriError::param("spectral_target must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_table() {
        let c = ModelConfig::default();
        assert_eq!((c.lr, c.batch_size, c.epochs), (1e-4, 44, 100));
        assert_eq!((c.beta1, c.beta2, c.beta3), (0.1, 0.1, 1.0));
        assert_eq!((c.latent_dim, c.obs_dim, c.action_dim, c.n_rc, c.width), (3, 60, 3, 1000, 100));
    }

    #[test]
    fn flag_labels_round_trip() {
        let all = Flags::all();
        assert_eq!(all[0], Flags::FULL);
        assert_eq!(all[7], Flags::CONVENTIONAL);
        let mut labels: Vec<String> = all.iter().map(|f| f.label()).collect();
        for f in all {
            assert_eq!(Flags::parse(&f.label()).unwrap(), f);
        }
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 8);
        assert_eq!(Flags::FULL.slug(), "pD-pA-pC");
        assert_eq!(Flags::CONVENTIONAL.slug(), "mD-mA-mC");
        assert!(Flags::parse("+D+A").is_err());
        assert!(Flags::parse("*D+A+C").is_err());
    }
}
