#![allow(dead_code)]

use phri_core::model::{Flags, ModelConfig, PhriModel, StepInputs, StepNoise};
use phri_core::nn::{Gradients, Mat};
use phri_core::sim::{Dataset, DatasetSpec, Standardization};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Observation, latent and action dims 2, eight reservoir neurons, width 8.
pub fn tiny_config(flags: Flags, seed: u64) -> ModelConfig {
    ModelConfig {
        flags,
        obs_dim: 2,
        latent_dim: 2,
        action_dim: 2,
        n_rc: 8,
        width: 8,
        proj_dim: 2,
        seed,
        ..ModelConfig::default()
    }
}

pub fn identity_stats(obs: usize, act: usize) -> Standardization {
    Standardization {
        obs_mean: vec![0.0; obs],
        obs_std: vec![1.0; obs],
        act_mean: vec![0.0; act],
        act_std: vec![1.0; act],
    }
}

pub fn tiny_model(flags: Flags, seed: u64) -> PhriModel {
    PhriModel::new(tiny_config(flags, seed), identity_stats(2, 2)).unwrap()
}

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, a: f64) -> Mat {
    Mat::from_shape_fn((r, c), |_| rng.random_range(-a..a))
}

pub fn random_step(m: &PhriModel, rows: usize, rng: &mut ChaCha8Rng) -> (StepInputs, StepNoise) {
    let c = &m.config;
    (
        StepInputs {
            obs: rand_mat(rng, rows, c.obs_dim, 1.5),
            action: rand_mat(rng, rows, c.action_dim, 1.5),
            next_obs: rand_mat(rng, rows, c.obs_dim, 1.5),
            hist_s: rand_mat(rng, rows, c.n_rc, 0.8),
            hist_a: rand_mat(rng, rows, c.n_rc, 0.8),
        },
        StepNoise {
            state: rand_mat(rng, rows, c.latent_dim, 2.0),
            action: rand_mat(rng, rows, c.action_dim, 2.0),
        },
    )
}

/// Moves every parameter away from its initialization so the check does not
/// sit at a special point (for example the constant student-t dof start).
pub fn jitter_params(m: &mut PhriModel, rng: &mut ChaCha8Rng, amount: f64) {
    for v in m.params.values_mut() {
        v.mapv_inplace(|w| w + rng.random_range(-amount..amount));
    }
}

pub struct FdResult {
    pub max_rel: f64,
    pub compared: usize,
    pub skipped: usize,
}

/// Central differences (step 1e-5) of the full step loss against the
/// analytic gradient. Coordinates whose perturbation changes a ReLU sign
/// are skipped because the loss is not differentiable across the kink.
pub fn fd_check(m: &mut PhriModel, inp: &StepInputs, noise: &StepNoise) -> FdResult {
    const H: f64 = 1e-5;
    let mut grads = Gradients::zeros_like(&m.params);
    m.loss_and_grad(inp, noise, &mut grads).unwrap();
    let (_, base) = m.loss_with_mask(inp, noise).unwrap();
    let mut out = FdResult {
        max_rel: 0.0,
        compared: 0,
        skipped: 0,
    };
    let ids: Vec<_> = m.params.ids().collect();
    for id in ids {
        let (rows, cols) = m.params.get(id).dim();
        for r in 0..rows {
            for c in 0..cols {
                let orig = m.params.get(id)[[r, c]];
                m.params.get_mut(id)[[r, c]] = orig + H;
                let (fp, mp) = m.loss_with_mask(inp, noise).unwrap();
                m.params.get_mut(id)[[r, c]] = orig - H;
                let (fm, mm) = m.loss_with_mask(inp, noise).unwrap();
                m.params.get_mut(id)[[r, c]] = orig;
                if mp != base || mm != base {
                    out.skipped += 1;
                    continue;
                }
                let num = (fp - fm) / (2.0 * H);
                let ana = grads.get(id)[[r, c]];
                let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-3);
                out.max_rel = out.max_rel.max(rel);
                out.compared += 1;
            }
        }
    }
    out
}

/// Small simulated dataset: 1/1/1 trajectories per condition.
pub fn small_dataset(n_steps: usize) -> Dataset {
    let mut spec = DatasetSpec::desk();
    spec.counts.train = 1;
    spec.counts.val = 1;
    spec.counts.test = 1;
    spec.n_steps = n_steps;
    phri_core::sim::generate_dataset(&spec).unwrap()
}

/// Model settings small enough for a few seconds of training.
pub fn small_model_config(flags: Flags, epochs: usize) -> ModelConfig {
    ModelConfig {
        flags,
        n_rc: 16,
        width: 8,
        proj_dim: 4,
        epochs,
        batch_size: 8,
        update_every: 10,
        lr: 1e-3,
        ..ModelConfig::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
