//! Run configuration shared by every command, read from TOML and frozen next
//! to each run's outputs.

use crate::crc::ReservoirMode;
use crate::error::{PhriError, Result};
use crate::model::{Flags, ModelConfig};
use crate::sim::{DatasetSpec, ACTION_DIM, OBS_DIM};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// File name of the frozen configuration written into every output directory.
pub const FROZEN_CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    /// Model seeds trained for every cell.
    pub seeds: Vec<u64>,
    /// Cell labels such as `+D-A+C`; all eight by default.
    pub cells: Vec<String>,
    /// Cells trained concurrently.
    pub jobs: usize,
    /// Keep a checkpoint in every cell directory.
    pub save_checkpoints: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            seeds: (0..5).collect(),
            cells: Flags::all().iter().map(Flags::label).collect(),
            jobs: 1,
            save_checkpoints: true,
        }
    }
}

impl AblationConfig {
    /// Parsed cells in configuration order.
    pub fn flags(&self) -> Result<Vec<Flags>> {
        let mut out: Vec<Flags> = Vec::with_capacity(self.cells.len());
        for c in &self.cells {
            let f = Flags::parse(c)?;
            if out.contains(&f) {
                return Err(PhriError::param(format!("ablation cell {c} listed twice")));
            }
            out.push(f);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(PhriError::param("ablation needs at least one seed"));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(PhriError::param("ablation seeds must be distinct"));
        }
        if self.cells.is_empty() {
            return Err(PhriError::param("ablation needs at least one cell"));
        }
        if self.jobs == 0 {
            return Err(PhriError::param("ablation jobs must be at least 1"));
        }
        self.flags().map(|_| ())
    }
}

/// Free-response spectrum analysis of a bias-free reservoir.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FftConfig {
    pub n_neurons: usize,
    pub input_dim: usize,
    pub mode: ReservoirMode,
    pub n_drive: usize,
    pub n_free: usize,
    /// Seed of the reservoir draw and of the driving inputs.
    pub seed: u64,
    pub spectral_target: f64,
}

impl Default for FftConfig {
    fn default() -> Self {
        FftConfig {
            n_neurons: 1000,
            input_dim: 3,
            mode: ReservoirMode::Complex,
            n_drive: 100,
            n_free: 400,
            seed: 0,
            spectral_target: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub model: ModelConfig,
    pub ablation: AblationConfig,
    pub fft: FftConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSpec::desk(),
            model: ModelConfig::desk(),
            ablation: AblationConfig::default(),
            fft: FftConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML; omitted keys keep their desk-scale defaults.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let fmt = |e: &dyn std::fmt::Display| PhriError::format(origin, e.to_string());
        let user: toml::Table = toml::from_str(text).map_err(|e| fmt(&e))?;
        // Merge over the serialized defaults: a partial `[model]` section must
        // fall back to the desk model, not to `ModelConfig::default()`.
        let mut base = toml::Table::try_from(RunConfig::default()).map_err(|e| fmt(&e))?;
        merge(&mut base, user);
        base.try_into().map_err(|e| fmt(&e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PhriError::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PhriError::param(format!("cannot serialize config: {e}")))
    }

    /// Writes the resolved configuration into `dir`.
    pub fn freeze(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FROZEN_CONFIG_FILE);
        std::fs::write(&path, self.to_toml()?).map_err(|e| PhriError::io(&path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.model.validate()?;
        if self.model.obs_dim != OBS_DIM || self.model.action_dim != ACTION_DIM {
            return Err(PhriError::param(format!(
                "model dimensions {}/{} do not match the simulator's {OBS_DIM}/{ACTION_DIM}",
                self.model.obs_dim, self.model.action_dim
            )));
        }
        self.ablation.validate()?;
        let f = &self.fft;
        if f.n_neurons == 0 || f.input_dim == 0 {
            return Err(PhriError::param("fft reservoir needs n_neurons >= 1 and input_dim >= 1"));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_is_exact() {
        let mut c = RunConfig::default();
        c.model.lr = 0.1 + 0.2;
        c.dataset.generator.human.noise_std = 1.0 / 3.0;
        let text = c.to_toml().unwrap();
        let back = RunConfig::from_toml_str(&text, Path::new("mem")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_toml_str("[model]\nepochs = 3\n", Path::new("mem")).unwrap();
        assert_eq!(c.model.epochs, 3);
        assert_eq!(c.model.n_rc, ModelConfig::desk().n_rc);
        assert_eq!(c.dataset, DatasetSpec::desk());
        let c = RunConfig::from_toml_str("[dataset.counts]\ntrain = 2\n", Path::new("mem")).unwrap();
        assert_eq!(c.dataset.counts.train, 2);
        assert_eq!(c.dataset.counts.test, DatasetSpec::desk().counts.test);
        assert_eq!(c.model, ModelConfig::desk());
    }

    #[test]
    fn unknown_cell_and_duplicate_seed_are_rejected() {
        let mut c = RunConfig::default();
        c.ablation.cells = vec!["+D+X+C".into()];
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.ablation.seeds = vec![1, 1];
        assert!(c.validate().is_err());
    }

    #[test]
    fn malformed_toml_is_a_format_error() {
        let e = RunConfig::from_toml_str("[model\n", Path::new("bad.toml")).unwrap_err();
        assert!(matches!(e, PhriError::Format { .. }));
    }
}
