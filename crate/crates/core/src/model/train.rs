//! Training loop, one-step-ahead evaluation and latent export.

use super::config::{HistoryInput, ModelConfig};
use super::network::{LossTerms, PhriModel, Prediction, StepInputs, StepNoise};
use crate::error::{PhriError, Result};
use crate::nn::{AmsGrad, AmsGradConfig, Gradients, Mat};
use crate::rng::stream_rng;
use crate::sim::{Dataset, Split, Trajectory};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

const STREAM_SHUFFLE: u64 = 1_000;
const STREAM_NOISE: u64 = 2_000;

/// Largest number of trajectories stepped together during evaluation.
const EVAL_CHUNK: usize = 64;

/// Standardized copy of one trajectory.
struct Prepared {
    obs: Mat,
    act: Mat,
}

fn prepare(model: &PhriModel, trajs: &[&Trajectory]) -> Result<Vec<Prepared>> {
    trajs
        .iter()
        .map(|t| {
            if t.obs.ncols() != model.config.obs_dim || t.actions.ncols() != model.config.action_dim {
                return Err(PhriError::param(format!(
                    "trajectory {} has {}/{} observation/action channels, model expects {}/{}",
                    t.id,
                    t.obs.ncols(),
                    t.actions.ncols(),
                    model.config.obs_dim,
                    model.config.action_dim
                )));
            }
            Ok(Prepared {
                obs: model.stats.obs(&t.obs),
                act: model.stats.actions(&t.actions),
            })
        })
        .collect()
}

/// Indices grouped by trajectory length, ascending.
fn length_groups(lens: impl IntoIterator<Item = usize>) -> Vec<Vec<usize>> {
    let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, l) in lens.into_iter().enumerate() {
        map.entry(l).or_default().push(i);
    }
    map.into_values().collect()
}

fn stack_rows(batch: &[&Prepared], t: usize, obs: bool) -> Mat {
    let width = if obs { batch[0].obs.ncols() } else { batch[0].act.ncols() };
    let mut m = Mat::zeros((batch.len(), width));
    for (i, p) in batch.iter().enumerate() {
        let src = if obs { p.obs.row(t) } else { p.act.row(t) };
        m.row_mut(i).assign(&src);
    }
    m
}

fn readouts(states: &[Vec<Complex64>]) -> Mat {
    let n = states[0].len();
    let mut m = Mat::zeros((states.len(), n));
    for (i, s) in states.iter().enumerate() {
        for (dst, h) in m.row_mut(i).iter_mut().zip(s) {
            *dst = h.re;
        }
    }
    m
}

fn normal_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Batch-stepped reservoir histories for a set of rows.
struct Histories {
    s: Vec<Vec<Complex64>>,
    a: Vec<Vec<Complex64>>,
    scratch: Vec<Complex64>,
}

impl Histories {
    fn new(model: &PhriModel, rows: usize) -> Self {
        let n = model.config.n_rc;
        let zero = Complex64::new(0.0, 0.0);
        Histories {
            s: vec![vec![zero; n]; rows],
            a: vec![vec![zero; n]; rows],
            scratch: vec![zero; n],
        }
    }

    fn advance(&mut self, model: &PhriModel, states: &Mat, actions: &Mat) -> Result<()> {
        for i in 0..self.s.len() {
            let s = states.row(i).to_vec();
            let a = actions.row(i).to_vec();
            model.res_s.step_in_place(&mut self.s[i], &s, &mut self.scratch)?;
            model.res_a.step_in_place(&mut self.a[i], &a, &mut self.scratch)?;
        }
        Ok(())
    }
}

/// Row-weighted running mean of loss terms.
#[derive(Debug, Default, Clone, Copy)]
struct TermAccum {
    sum: LossTerms,
    count: f64,
}

impl TermAccum {
    fn add(&mut self, t: &LossTerms, weight: f64) {
        self.sum.total += weight * t.total;
        self.sum.recon += weight * t.recon;
        self.sum.kl_state += weight * t.kl_state;
        self.sum.kl_action += weight * t.kl_action;
        self.sum.action_nll += weight * t.action_nll;
        self.count += weight;
    }

    fn mean(&self) -> LossTerms {
        let k = 1.0 / self.count.max(1.0);
        LossTerms {
            total: self.sum.total * k,
            recon: self.sum.recon * k,
            kl_state: self.sum.kl_state * k,
            kl_action: self.sum.kl_action * k,
            action_nll: self.sum.action_nll * k,
        }
    }
}

fn train_batch(
    model: &mut PhriModel,
    opt: &mut AmsGrad,
    batch: &[&Prepared],
    rng: &mut ChaCha8Rng,
    acc: &mut TermAccum,
) -> Result<()> {
    let rows = batch.len();
    let len = batch[0].obs.nrows();
    let c = model.config.clone();
    let chunk = if c.update_every == 0 { len - 1 } else { c.update_every };
    let mut hist = Histories::new(model, rows);
    let mut grads = Gradients::zeros_like(&model.params);
    let mut pending = 0usize;
    for t in 0..len - 1 {
        let inp = StepInputs {
            obs: stack_rows(batch, t, true),
            action: stack_rows(batch, t, false),
            next_obs: stack_rows(batch, t + 1, true),
            hist_s: readouts(&hist.s),
            hist_a: readouts(&hist.a),
        };
        let noise = StepNoise {
            state: normal_mat(rng, rows, c.latent_dim),
            action: normal_mat(rng, rows, c.action_dim),
        };
        let (terms, sample) = model
            .loss_and_grad(&inp, &noise, &mut grads)
            .map_err(|e| PhriError::numeric(format!("time step {t}: {e}")))?;
        acc.add(&terms, rows as f64);
        pending += 1;
        let s_in = match c.history_input {
            HistoryInput::Sample => &sample.state_sample,
            HistoryInput::Mean => &sample.state_mean,
        };
        hist.advance(model, s_in, &inp.action)?;
        if pending == chunk || t + 2 == len {
            grads.scale(1.0 / pending as f64);
            grads.clip_global_norm(c.clip_norm);
            opt.step(&mut model.params, &grads);
            grads.zero();
            pending = 0;
        }
    }
    Ok(())
}

/// Steps equal-length trajectories together with mean predictions, calling
/// `visit(t, prediction)` for every time step.
fn run_means(model: &PhriModel, batch: &[&Prepared], mut visit: impl FnMut(usize, &Prediction)) -> Result<()> {
    let len = batch[0].obs.nrows();
    let mut hist = Histories::new(model, batch.len());
    for t in 0..len {
        let obs = stack_rows(batch, t, true);
        let act = stack_rows(batch, t, false);
        let pred = model.predict(&obs, &act, &readouts(&hist.s), &readouts(&hist.a));
        visit(t, &pred);
        if t + 1 < len {
            hist.advance(model, &pred.state_mean, &act)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MseSummary {
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MseSummary {
    pub fn from_values(v: &[f64]) -> Self {
        if v.is_empty() {
            return MseSummary {
                mean: f64::NAN,
                median: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        let m = s.len() / 2;
        let median = if s.len() % 2 == 1 { s[m] } else { 0.5 * (s[m - 1] + s[m]) };
        MseSummary { mean, median, std }
    }
}

/// Per-trajectory mean squared errors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMse {
    pub id: String,
    pub action: f64,
    pub observation: f64,
}

/// One-step-ahead errors in standardized units, summarized over every
/// (trajectory, step) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub action: MseSummary,
    pub observation: MseSummary,
    pub n_steps: usize,
    pub per_trajectory: Vec<TrajectoryMse>,
}

/// Scores `o_{t+1}` against the decoder mean and `a_t` against the predicted
/// action for `t < len - 1`.
pub fn evaluate(model: &PhriModel, trajs: &[&Trajectory]) -> Result<EvalReport> {
    if trajs.is_empty() {
        return Err(PhriError::param("evaluation set is empty"));
    }
    let prepared = prepare(model, trajs)?;
    let mut step_act = vec![Vec::new(); trajs.len()];
    let mut step_obs = vec![Vec::new(); trajs.len()];
    for group in length_groups(prepared.iter().map(|p| p.obs.nrows())) {
        for idx in group.chunks(EVAL_CHUNK) {
            let batch: Vec<&Prepared> = idx.iter().map(|&i| &prepared[i]).collect();
            let len = batch[0].obs.nrows();
            run_means(model, &batch, |t, pred| {
                if t + 1 >= len {
                    return;
                }
                for (r, &i) in idx.iter().enumerate() {
                    let p = &prepared[i];
                    let eo = (&pred.obs.row(r) - &p.obs.row(t + 1)).mapv(|x| x * x).mean().unwrap();
                    let ea = (&pred.action.row(r) - &p.act.row(t)).mapv(|x| x * x).mean().unwrap();
                    step_obs[i].push(eo);
                    step_act[i].push(ea);
                }
            })?;
        }
    }
    let all_act: Vec<f64> = step_act.iter().flatten().copied().collect();
    let all_obs: Vec<f64> = step_obs.iter().flatten().copied().collect();
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let per_trajectory = trajs
        .iter()
        .enumerate()
        .map(|(i, t)| TrajectoryMse {
            id: t.id.clone(),
            action: mean(&step_act[i]),
            observation: mean(&step_obs[i]),
        })
        .collect();
    Ok(EvalReport {
        action: MseSummary::from_values(&all_act),
        observation: MseSummary::from_values(&all_obs),
        n_steps: all_obs.len(),
        per_trajectory,
    })
}

/// Encoder means along each trajectory (`len × latent_dim` each).
pub fn encode_latents(model: &PhriModel, trajs: &[&Trajectory]) -> Result<Vec<Mat>> {
    let prepared = prepare(model, trajs)?;
    let mut out: Vec<Mat> = prepared
        .iter()
        .map(|p| Mat::zeros((p.obs.nrows(), model.config.latent_dim)))
        .collect();
    for group in length_groups(prepared.iter().map(|p| p.obs.nrows())) {
        for idx in group.chunks(EVAL_CHUNK) {
            let batch: Vec<&Prepared> = idx.iter().map(|&i| &prepared[i]).collect();
            run_means(model, &batch, |t, pred| {
                for (r, &i) in idx.iter().enumerate() {
                    out[i].row_mut(t).assign(&pred.state_mean.row(r));
                }
            })?;
        }
    }
    Ok(out)
}

pub fn encode_trajectory_latent(model: &PhriModel, traj: &Trajectory) -> Result<Mat> {
    Ok(encode_latents(model, &[traj])?.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Validation action MSE.
    pub action_mse: f64,
    /// Validation observation MSE.
    pub obs_mse: f64,
    /// Mean training loss terms over the epoch.
    pub train: LossTerms,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: PhriModel,
    pub optimizer: AmsGrad,
    pub curves: Vec<EpochRecord>,
    /// Set when training stopped early; the model holds the last good state.
    pub failure: Option<String>,
}

/// Trains on the training split, recording validation MSEs every epoch.
pub fn train(dataset: &Dataset, config: &ModelConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.manifest.obs_dim != config.obs_dim || dataset.manifest.action_dim != config.action_dim {
        return Err(PhriError::param("dataset dimensions do not match the model configuration"));
    }
    let train_set = dataset.split(Split::Train);
    let val_set = dataset.split(Split::Val);
    if train_set.is_empty() || val_set.is_empty() {
        return Err(PhriError::param("training needs non-empty train and val splits"));
    }
    if train_set.iter().any(|t| t.len() < 2) {
        return Err(PhriError::param("training trajectories need at least two steps"));
    }
    let mut model = PhriModel::new(config.clone(), dataset.stats().clone())?;
    let prepared = prepare(&model, &train_set)?;
    let mut opt = AmsGrad::new(
        &model.params,
        AmsGradConfig {
            lr: config.lr,
            ..Default::default()
        },
    )?;
    let mut noise_rng = stream_rng(config.seed, STREAM_NOISE);
    let mut curves = Vec::with_capacity(config.epochs);
    let mut failure = None;
    for epoch in 1..=config.epochs {
        let good = (model.params.clone(), opt.clone());
        let mut shuffle_rng = stream_rng(config.seed, STREAM_SHUFFLE + epoch as u64);
        let mut batches = Vec::new();
        for mut group in length_groups(prepared.iter().map(|p| p.obs.nrows())) {
            group.shuffle(&mut shuffle_rng);
            batches.extend(group.chunks(config.batch_size).map(|c| c.to_vec()));
        }
        batches.shuffle(&mut shuffle_rng);
        let mut acc = TermAccum::default();
        let mut result = Ok(());
        for idx in &batches {
            let batch: Vec<&Prepared> = idx.iter().map(|&i| &prepared[i]).collect();
            result = train_batch(&mut model, &mut opt, &batch, &mut noise_rng, &mut acc);
            if result.is_err() {
                break;
            }
        }
        let terms = acc.mean();
        if let Err(e) = result.and_then(|_| {
            if terms.is_finite() {
                Ok(())
            } else {
                Err(PhriError::numeric(format!("non-finite epoch loss {terms:?}")))
            }
        }) {
            log::error!("epoch {epoch} of {}: {e}; restoring last good parameters", config.flags);
            model.params = good.0;
            opt = good.1;
            failure = Some(format!("epoch {epoch}: {e}"));
            break;
        }
        let val = evaluate(&model, &val_set)?;
        let rec = EpochRecord {
            epoch,
            action_mse: val.action.mean,
            obs_mse: val.observation.mean,
            train: terms,
        };
        log::info!(
            "{} seed {} epoch {epoch}: loss {:.4} val action {:.4} obs {:.4}",
            config.flags,
            config.seed,
            terms.total,
            rec.action_mse,
            rec.obs_mse
        );
        curves.push(rec);
    }
    Ok(TrainOutcome {
        model,
        optimizer: opt,
        curves,
        failure,
    })
}

const CURVES_HEADER: &str = "epoch,action_mse,obs_mse,train_loss,recon,kl_state,kl_action,action_nll";

pub fn write_curves_csv(path: &Path, curves: &[EpochRecord]) -> Result<()> {
    let mut s = String::from(CURVES_HEADER);
    s.push('\n');
    for r in curves {
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.epoch,
            r.action_mse,
            r.obs_mse,
            r.train.total,
            r.train.recon,
            r.train.kl_state,
            r.train.kl_action,
            r.train.action_nll
        );
    }
    std::fs::write(path, s).map_err(|e| PhriError::io(path, e))
}

pub fn read_curves_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| PhriError::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(CURVES_HEADER) {
        return Err(PhriError::format(path, "unexpected curves header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 8 {
                return Err(PhriError::format(path, format!("bad curves row {l:?}")));
            }
            let num = |i: usize| {
                f[i].parse::<f64>()
                    .map_err(|e| PhriError::format(path, format!("bad number {:?}: {e}", f[i])))
            };
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|e| PhriError::format(path, format!("bad epoch: {e}")))?,
                action_mse: num(1)?,
                obs_mse: num(2)?,
                train: LossTerms {
                    total: num(3)?,
                    recon: num(4)?,
                    kl_state: num(5)?,
                    kl_action: num(6)?,
                    action_nll: num(7)?,
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_known_values() {
        let s = MseSummary::from_values(&[1.0, 3.0, 2.0, 10.0]);
        assert_eq!(s.mean, 4.0);
        assert_eq!(s.median, 2.5);
        assert!((s.std - 12.5f64.sqrt()).abs() < 1e-12);
        assert!(MseSummary::from_values(&[]).mean.is_nan());
    }

    #[test]
    fn groups_by_length() {
        assert_eq!(length_groups([3, 5, 3, 1]), vec![vec![3], vec![0, 2], vec![1]]);
    }
}
