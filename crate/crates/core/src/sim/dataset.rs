//! Labeled dataset generation, standardization statistics and on-disk format.
//!
//! Layout: `manifest.json` plus one CSV per trajectory with header
//! `t,o_0..o_59,a_0..a_2`. Floats are written with 17 significant digits.

use super::human::OBS_DIM;
use super::profile::Condition;
use super::trajectory::{plan_segments, simulate, GeneratorConfig, Schedule, Segment, Trajectory, ACTION_DIM};
use crate::error::{PhriError, Result};
use crate::rng::mix;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;
pub const GENERATOR_VERSION: &str = "phri-sim 1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    /// Trajectories per condition and split.
    pub counts: SplitCounts,
    pub n_steps: usize,
    pub seed: u64,
    pub schedule: Schedule,
    pub generator: GeneratorConfig,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::desk()
    }
}

impl DatasetSpec {
    /// 4/1/1 trajectories per condition, 300 steps each.
    pub fn desk() -> Self {
        DatasetSpec {
            counts: SplitCounts {
                train: 4,
                val: 1,
                test: 1,
            },
            n_steps: 300,
            seed: 0,
            schedule: Schedule::Single,
            generator: GeneratorConfig::default(),
        }
    }

    /// 11/3/3 trajectories per condition, 900 steps each.
    pub fn full() -> Self {
        DatasetSpec {
            counts: SplitCounts {
                train: 11,
                val: 3,
                test: 3,
            },
            n_steps: 900,
            ..DatasetSpec::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(PhriError::param("n_steps must be at least 1"));
        }
        if self.counts.train == 0 {
            return Err(PhriError::param("at least one training trajectory per condition is required"));
        }
        self.generator.validate()
    }
}

/// Per-channel affine standardization fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub obs_mean: Vec<f64>,
    pub obs_std: Vec<f64>,
    pub act_mean: Vec<f64>,
    pub act_std: Vec<f64>,
}

/// Channels whose spread is below this are left unscaled.
const STD_FLOOR: f64 = 1e-8;

fn column_stats(rows: &[&Array2<f64>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n: usize = rows.iter().map(|m| m.nrows()).sum();
    let mut mean = vec![0.0; dim];
    for m in rows {
        for (j, col) in m.axis_iter(Axis(1)).enumerate() {
            mean[j] += col.sum();
        }
    }
    mean.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    let mut var = vec![0.0; dim];
    for m in rows {
        for (j, col) in m.axis_iter(Axis(1)).enumerate() {
            var[j] += col.iter().map(|x| (x - mean[j]).powi(2)).sum::<f64>();
        }
    }
    let std = var
        .iter()
        .map(|v| {
            let s = (v / n.max(1) as f64).sqrt();
            if s < STD_FLOOR {
                1.0
            } else {
                s
            }
        })
        .collect();
    (mean, std)
}

impl Standardization {
    pub fn identity() -> Self {
        Standardization {
            obs_mean: vec![0.0; OBS_DIM],
            obs_std: vec![1.0; OBS_DIM],
            act_mean: vec![0.0; ACTION_DIM],
            act_std: vec![1.0; ACTION_DIM],
        }
    }

    pub fn fit<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>) -> Result<Self> {
        let trajs: Vec<&Trajectory> = trajs.into_iter().collect();
        if trajs.is_empty() {
            return Err(PhriError::param("cannot fit standardization on an empty set"));
        }
        let obs: Vec<&Array2<f64>> = trajs.iter().map(|t| &t.obs).collect();
        let act: Vec<&Array2<f64>> = trajs.iter().map(|t| &t.actions).collect();
        let (obs_mean, obs_std) = column_stats(&obs, trajs[0].obs.ncols());
        let (act_mean, act_std) = column_stats(&act, trajs[0].actions.ncols());
        Ok(Standardization {
            obs_mean,
            obs_std,
            act_mean,
            act_std,
        })
    }

    fn apply(m: &Array2<f64>, mean: &[f64], std: &[f64]) -> Array2<f64> {
        let mut out = m.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean[j]) / std[j];
            }
        }
        out
    }

    pub fn obs(&self, m: &Array2<f64>) -> Array2<f64> {
        Self::apply(m, &self.obs_mean, &self.obs_std)
    }

    pub fn actions(&self, m: &Array2<f64>) -> Array2<f64> {
        Self::apply(m, &self.act_mean, &self.act_std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub id: String,
    pub file: String,
    pub split: Split,
    pub seed: u64,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub generator_version: String,
    pub dt: f64,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub spec: DatasetSpec,
    pub trajectories: Vec<TrajectoryEntry>,
    pub standardization: Standardization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    /// Same order as `manifest.trajectories`.
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&Trajectory> {
        self.manifest
            .trajectories
            .iter()
            .zip(&self.trajectories)
            .filter(|(e, _)| e.split == split)
            .map(|(_, t)| t)
            .collect()
    }

    pub fn stats(&self) -> &Standardization {
        &self.manifest.standardization
    }
}

fn trajectory_seed(base: u64, split: Split, condition: Condition, idx: usize) -> u64 {
    let s = match split {
        Split::Train => 0u64,
        Split::Val => 1,
        Split::Test => 2,
    };
    mix(base, (s << 40) | ((condition.index() as u64) << 20) | idx as u64)
}

/// Generates every trajectory in memory and fits standardization on the
/// training split.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut entries = Vec::new();
    let mut trajectories = Vec::new();
    for split in Split::ALL {
        for condition in Condition::all() {
            for idx in 0..spec.counts.get(split) {
                let seed = trajectory_seed(spec.seed, split, condition, idx);
                let segments = plan_segments(condition, spec.schedule, spec.n_steps, seed);
                let mut tr = simulate(&segments, seed, spec.n_steps, &spec.generator)?.trajectory;
                let id = format!("{}-{}-{:02}", split.name(), condition.label(), idx);
                tr.id = id.clone();
                entries.push(TrajectoryEntry {
                    file: format!("{id}.csv"),
                    id,
                    split,
                    seed,
                    segments,
                });
                trajectories.push(tr);
            }
        }
    }
    let standardization = Standardization::fit(
        entries
            .iter()
            .zip(&trajectories)
            .filter(|(e, _)| e.split == Split::Train)
            .map(|(_, t)| t),
    )?;
    Ok(Dataset {
        manifest: Manifest {
            schema_version: SCHEMA_VERSION,
            generator_version: GENERATOR_VERSION.to_string(),
            dt: spec.generator.motor.dt,
            obs_dim: OBS_DIM,
            action_dim: ACTION_DIM,
            spec: spec.clone(),
            trajectories: entries,
            standardization,
        },
        trajectories,
    })
}

/// Creates `dir` for writing; an existing non-empty directory is refused
/// unless `force` is set.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .map_err(|e| PhriError::io(dir, e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(PhriError::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::AlreadyExists, "output directory exists; pass --force to overwrite"),
            ));
        }
    }
    fs::create_dir_all(dir).map_err(|e| PhriError::io(dir, e))
}

fn csv_header() -> String {
    let mut h = String::from("t");
    for i in 0..OBS_DIM {
        let _ = write!(h, ",o_{i}");
    }
    for i in 0..ACTION_DIM {
        let _ = write!(h, ",a_{i}");
    }
    h
}

pub fn write_trajectory_csv(path: &Path, tr: &Trajectory) -> Result<()> {
    let mut s = csv_header();
    s.push('\n');
    for k in 0..tr.len() {
        let _ = write!(s, "{:.16e}", tr.t[k]);
        for v in tr.obs.row(k).iter().chain(tr.actions.row(k).iter()) {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| PhriError::io(path, e))
}

/// Reads the numeric columns of a trajectory CSV as `(t, obs, actions)`.
pub fn read_trajectory_csv(path: &Path) -> Result<(Vec<f64>, Array2<f64>, Array2<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| PhriError::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == csv_header() => {}
        _ => return Err(PhriError::format(path, "unexpected CSV header")),
    }
    let width = 1 + OBS_DIM + ACTION_DIM;
    let mut t = Vec::new();
    let mut flat_obs = Vec::new();
    let mut flat_act = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| PhriError::format(path, format!("line {}: {e}", ln + 2)))?;
        if vals.len() != width {
            return Err(PhriError::format(
                path,
                format!("line {}: expected {width} fields, found {}", ln + 2, vals.len()),
            ));
        }
        t.push(vals[0]);
        flat_obs.extend_from_slice(&vals[1..1 + OBS_DIM]);
        flat_act.extend_from_slice(&vals[1 + OBS_DIM..]);
    }
    let n = t.len();
    let obs = Array2::from_shape_vec((n, OBS_DIM), flat_obs).expect("row width checked");
    let act = Array2::from_shape_vec((n, ACTION_DIM), flat_act).expect("row width checked");
    Ok((t, obs, act))
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| PhriError::format(path, format!("cannot serialize manifest: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| PhriError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| PhriError::io(path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| PhriError::format(path, e.to_string()))?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(PhriError::format(path, format!("unsupported schema version {}", m.schema_version)));
    }
    if m.obs_dim != OBS_DIM || m.action_dim != ACTION_DIM {
        return Err(PhriError::format(path, "observation/action dimensions do not match this build"));
    }
    Ok(m)
}

pub fn write_dataset(dir: &Path, ds: &Dataset, force: bool) -> Result<()> {
    prepare_output_dir(dir, force)?;
    for (entry, tr) in ds.manifest.trajectories.iter().zip(&ds.trajectories) {
        write_trajectory_csv(&dir.join(&entry.file), tr)?;
    }
    write_manifest(&dir.join(MANIFEST_FILE), &ds.manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
    let mut trajectories = Vec::with_capacity(manifest.trajectories.len());
    for e in &manifest.trajectories {
        let path: PathBuf = dir.join(&e.file);
        let (t, obs, actions) = read_trajectory_csv(&path)?;
        if e.segments.is_empty() {
            return Err(PhriError::format(&path, "trajectory has no condition segments"));
        }
        trajectories.push(Trajectory {
            id: e.id.clone(),
            seed: e.seed,
            dt: manifest.dt,
            segments: e.segments.clone(),
            t,
            obs,
            actions,
        });
    }
    Ok(Dataset { manifest, trajectories })
}
