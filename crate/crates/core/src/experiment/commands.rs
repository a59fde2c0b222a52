//! Single-run commands: generate, train, eval, latent and fft.

use super::config::RunConfig;
use crate::crc::{free_response_spectrum, init_reservoir, FreeResponse, ReservoirConfig};
use crate::error::{PhriError, Result};
use crate::metrics::{centroid_distances, silhouette};
use crate::model::{
    encode_latents, evaluate, load_model, save_model, train, write_curves_csv, EvalReport,
    ModelConfig, MseSummary, PhriModel,
};
use crate::sim::{generate_dataset, load_dataset, prepare_output_dir, write_dataset, Dataset, Split, Trajectory};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const CURVES_FILE: &str = "curves.csv";
pub const EVAL_FILE: &str = "eval.json";
pub const EVAL_TRAJECTORIES_FILE: &str = "eval_trajectories.csv";
pub const LATENTS_FILE: &str = "latents.csv";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const SPECTRUM_DRIVEN_FILE: &str = "spectrum_driven.csv";
pub const SPECTRUM_FREE_FILE: &str = "spectrum_free.csv";
pub const SPECTRUM_SUMMARY_FILE: &str = "spectrum_summary.json";

/// Marker used wherever the silhouette is undefined.
pub const NOT_APPLICABLE: &str = "not-applicable";

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| PhriError::format(path, format!("cannot serialize: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| PhriError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| PhriError::io(path, e))
}

/// Reads a dataset and checks that its dimensions fit `model`.
pub fn load_dataset_for(dir: &Path, model: &ModelConfig) -> Result<Dataset> {
    let ds = load_dataset(dir)?;
    if ds.manifest.obs_dim != model.obs_dim || ds.manifest.action_dim != model.action_dim {
        return Err(PhriError::format(
            dir.join(crate::sim::MANIFEST_FILE),
            format!(
                "dataset has obs/action dims {}/{}, model expects {}/{}",
                ds.manifest.obs_dim, ds.manifest.action_dim, model.obs_dim, model.action_dim
            ),
        ));
    }
    Ok(ds)
}

pub fn cmd_generate(cfg: &RunConfig, out: &Path, force: bool) -> Result<Dataset> {
    cfg.validate()?;
    let ds = generate_dataset(&cfg.dataset)?;
    write_dataset(out, &ds, force)?;
    cfg.freeze(out)?;
    log::info!("wrote {} trajectories to {}", ds.trajectories.len(), out.display());
    Ok(ds)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub epochs_trained: usize,
    pub final_val_action_mse: f64,
    pub final_val_obs_mse: f64,
    pub failure: Option<String>,
}

/// Trains one model; writes `checkpoint/`, `curves.csv` and the frozen
/// config. A numeric failure still saves the last good parameters and the
/// curves before returning the error.
pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path, force: bool) -> Result<TrainSummary> {
    cfg.validate()?;
    let ds = load_dataset_for(data, &cfg.model)?;
    prepare_output_dir(out, force)?;
    cfg.freeze(out)?;
    let outcome = train(&ds, &cfg.model)?;
    let epochs = outcome.curves.len();
    save_model(&out.join(CHECKPOINT_DIR), &outcome.model, Some(&outcome.optimizer), epochs)?;
    write_curves_csv(&out.join(CURVES_FILE), &outcome.curves)?;
    let last = outcome.curves.last();
    let summary = TrainSummary {
        epochs_trained: epochs,
        final_val_action_mse: last.map_or(f64::NAN, |r| r.action_mse),
        final_val_obs_mse: last.map_or(f64::NAN, |r| r.obs_mse),
        failure: outcome.failure.clone(),
    };
    match outcome.failure {
        Some(msg) => Err(PhriError::numeric(format!("training stopped after {epochs} epochs: {msg}"))),
        None => Ok(summary),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MseJson {
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

impl From<MseSummary> for MseJson {
    fn from(s: MseSummary) -> Self {
        MseJson {
            mean: s.mean,
            median: s.median,
            std: s.std,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct EvalJson<'a> {
    split: &'a str,
    flags: String,
    epochs_trained: usize,
    n_steps: usize,
    action: MseJson,
    observation: MseJson,
}

fn load_checkpoint_for_eval(checkpoint: &Path) -> Result<(PhriModel, usize)> {
    let (model, _, epochs) = load_model(checkpoint)?;
    if epochs == 0 {
        log::warn!("checkpoint {} has not been trained", checkpoint.display());
    }
    Ok((model, epochs))
}

/// Evaluates a checkpoint on one split; writes `eval.json` and per-trajectory
/// errors.
pub fn cmd_eval(checkpoint: &Path, data: &Path, split: Split, out: &Path, force: bool) -> Result<EvalReport> {
    let (model, epochs) = load_checkpoint_for_eval(checkpoint)?;
    let ds = load_dataset_for(data, &model.config)?;
    let trajs = ds.split(split);
    let report = evaluate(&model, &trajs)?;
    prepare_output_dir(out, force)?;
    let json = EvalJson {
        split: split.name(),
        flags: model.config.flags.label(),
        epochs_trained: epochs,
        n_steps: report.n_steps,
        action: report.action.into(),
        observation: report.observation.into(),
    };
    write_json(&out.join(EVAL_FILE), &json)?;
    let mut csv = String::from("trajectory,condition,action_mse,obs_mse\n");
    for (t, r) in trajs.iter().zip(&report.per_trajectory) {
        let _ = writeln!(csv, "{},{},{:.16e},{:.16e}", r.id, t.condition().label(), r.action, r.observation);
    }
    write_text(&out.join(EVAL_TRAJECTORIES_FILE), &csv)?;
    Ok(report)
}

/// Encoder means of every step with the condition active at that step.
#[derive(Debug, Clone)]
pub struct LatentSet {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// `(trajectory index, step)` per point.
    pub origin: Vec<(usize, usize)>,
}

pub fn collect_latents(model: &PhriModel, trajs: &[&Trajectory]) -> Result<LatentSet> {
    let lat = encode_latents(model, trajs)?;
    let mut set = LatentSet {
        points: Vec::new(),
        labels: Vec::new(),
        origin: Vec::new(),
    };
    for (i, (tr, m)) in trajs.iter().zip(&lat).enumerate() {
        for (k, row) in m.rows().into_iter().enumerate() {
            set.points.push(row.to_vec());
            set.labels.push(tr.condition_at(k).index());
            set.origin.push((i, k));
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Silhouette {
    Value(f64),
    NotApplicable(&'static str),
}

impl Silhouette {
    pub fn from_option(v: Option<f64>) -> Self {
        v.map_or(Silhouette::NotApplicable(NOT_APPLICABLE), Silhouette::Value)
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Silhouette::Value(v) => Some(*v),
            Silhouette::NotApplicable(_) => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CentroidDistance {
    pub a: String,
    pub b: String,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LatentReport {
    pub split: String,
    pub flags: String,
    pub epochs_trained: usize,
    pub n_points: usize,
    pub silhouette: Silhouette,
    pub centroid_distances: Vec<CentroidDistance>,
}

fn condition_label(i: usize) -> String {
    crate::sim::Condition::from_index(i).map_or_else(|| format!("condition-{i}"), |c| c.label())
}

/// Exports per-step latents with condition labels and cluster statistics.
pub fn cmd_latent(checkpoint: &Path, data: &Path, split: Split, out: &Path, force: bool) -> Result<LatentReport> {
    let (model, epochs) = load_checkpoint_for_eval(checkpoint)?;
    let ds = load_dataset_for(data, &model.config)?;
    let trajs = ds.split(split);
    if trajs.is_empty() {
        return Err(PhriError::param(format!("split {} is empty", split.name())));
    }
    let set = collect_latents(&model, &trajs)?;
    prepare_output_dir(out, force)?;

    let mut csv = String::from("trajectory,condition,motion,arm,speed,t");
    for j in 0..model.config.latent_dim {
        let _ = write!(csv, ",s_{j}");
    }
    csv.push('\n');
    for ((&(i, k), p), &l) in set.origin.iter().zip(&set.points).zip(&set.labels) {
        let cond = condition_label(l);
        let parts: Vec<&str> = cond.splitn(3, '-').collect();
        let _ = write!(
            csv,
            "{},{},{},{},{},{:.16e}",
            trajs[i].id,
            cond,
            parts.first().unwrap_or(&""),
            parts.get(1).unwrap_or(&""),
            parts.get(2).unwrap_or(&""),
            trajs[i].t[k]
        );
        for v in p {
            let _ = write!(csv, ",{v:.16e}");
        }
        csv.push('\n');
    }
    write_text(&out.join(LATENTS_FILE), &csv)?;

    let sil = silhouette(&set.points, &set.labels);
    if sil.is_none() {
        log::warn!("silhouette is undefined for these labels; reporting {NOT_APPLICABLE}");
    }
    let report = LatentReport {
        split: split.name().to_string(),
        flags: model.config.flags.label(),
        epochs_trained: epochs,
        n_points: set.points.len(),
        silhouette: Silhouette::from_option(sil),
        centroid_distances: centroid_distances(&set.points, &set.labels)
            .into_iter()
            .map(|(a, b, d)| CentroidDistance {
                a: condition_label(a),
                b: condition_label(b),
                distance: d,
            })
            .collect(),
    };
    write_json(&out.join(CLUSTERS_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub mode: crate::crc::ReservoirMode,
    pub n_neurons: usize,
    pub n_drive: usize,
    pub n_free: usize,
    /// Mean absolute free-phase readout over the first and last quarter.
    pub early_amplitude: f64,
    pub late_amplitude: f64,
    pub retention: f64,
    pub max_driven_peak_ratio: f64,
    pub max_free_peak_ratio: f64,
}

fn spectra_csv(spectra: &[Vec<f64>], len: usize) -> String {
    let bins = spectra.first().map_or(0, Vec::len);
    let mut s = String::from("neuron");
    for k in 0..bins {
        let _ = write!(s, ",{:.16e}", FreeResponse::bin_frequency(k, len));
    }
    s.push('\n');
    for (i, row) in spectra.iter().enumerate() {
        let _ = write!(s, "{i}");
        for v in row {
            let _ = write!(s, ",{v:.16e}");
        }
        s.push('\n');
    }
    s
}

/// Per-neuron amplitude spectra of the driven and free phases. Column
/// headers are frequencies in cycles per step.
pub fn cmd_fft(cfg: &RunConfig, out: &Path, force: bool) -> Result<SpectrumSummary> {
    cfg.validate()?;
    let f = &cfg.fft;
    let mut rc = ReservoirConfig::new(f.n_neurons, f.input_dim, f.seed, f.mode);
    rc.spectral_target = f.spectral_target;
    let params = init_reservoir(&rc)?;
    let resp = free_response_spectrum(&params, f.n_drive, f.n_free, f.seed)?;
    prepare_output_dir(out, force)?;
    cfg.freeze(out)?;
    write_text(&out.join(SPECTRUM_DRIVEN_FILE), &spectra_csv(&resp.driven, f.n_drive))?;
    write_text(&out.join(SPECTRUM_FREE_FILE), &spectra_csv(&resp.free, f.n_free))?;
    let (early, late) = resp.quarter_amplitudes();
    let summary = SpectrumSummary {
        mode: f.mode,
        n_neurons: f.n_neurons,
        n_drive: f.n_drive,
        n_free: f.n_free,
        early_amplitude: early,
        late_amplitude: late,
        retention: if early > 0.0 { late / early } else { 0.0 },
        max_driven_peak_ratio: resp.max_driven_peak_ratio(),
        max_free_peak_ratio: resp.max_free_peak_ratio(),
    };
    write_json(&out.join(SPECTRUM_SUMMARY_FILE), &summary)?;
    Ok(summary)
}
