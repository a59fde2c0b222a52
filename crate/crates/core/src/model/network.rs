use super::config::{DisabledDynamics, ModelConfig};
use crate::crc::{init_reservoir, readout_real, ReservoirConfig, ReservoirMode, ReservoirParams, ReservoirState};
use crate::error::{PhriError, Result};
use crate::nn::{DiagNormal, DiagStudentT, Gradients, Graph, Mat, Mlp, NormalHead, ParamStore, StudentTHead, Var};
use crate::rng::{mix, stream_rng};
use crate::sim::Standardization;
use ndarray::Axis;

const STREAM_WEIGHTS: u64 = 10;
const STREAM_RES_S: u64 = 20;
const STREAM_RES_A: u64 = 21;

/// Trainable networks. Every network is built for every flag combination so
/// matched seeds give identical initial weights across ablations.
#[derive(Debug, Clone)]
pub struct Networks {
    pub proj_s: Mlp,
    pub proj_a: Mlp,
    pub encoder: NormalHead,
    pub prior_s: NormalHead,
    pub policy: NormalHead,
    pub prior_a: NormalHead,
    pub dynamics: Mlp,
    pub decoder: StudentTHead,
}

impl Networks {
    fn new(store: &mut ParamStore, c: &ModelConfig) -> Self {
        let rng = &mut stream_rng(c.seed, STREAM_WEIGHTS);
        let (w, p, l, a, o) = (c.width, c.proj_dim, c.latent_dim, c.action_dim, c.obs_dim);
        Networks {
            proj_s: Mlp::new(store, "proj_s", c.n_rc, w, p, rng),
            proj_a: Mlp::new(store, "proj_a", c.n_rc, w, p, rng),
            encoder: NormalHead::new(store, "encoder", o + p, w, l, rng),
            prior_s: NormalHead::new(store, "prior_s", p, w, l, rng),
            policy: NormalHead::new(store, "policy", l + p, w, a, rng),
            prior_a: NormalHead::new(store, "prior_a", p, w, a, rng),
            dynamics: Mlp::new(store, "dynamics", l + a, w, l, rng),
            decoder: StudentTHead::new(store, "decoder", l, w, o, rng),
        }
    }
}

/// Reservoir states for the latent and action histories.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryFeatures {
    pub h_s: ReservoirState,
    pub h_a: ReservoirState,
}

/// One time step for a batch of rows. Observations and actions are already
/// standardized; histories are real readouts as of the previous step.
#[derive(Debug, Clone)]
pub struct StepInputs {
    pub obs: Mat,
    pub action: Mat,
    pub next_obs: Mat,
    pub hist_s: Mat,
    pub hist_a: Mat,
}

/// Standard-normal noise for the two reparameterized samples.
#[derive(Debug, Clone)]
pub struct StepNoise {
    pub state: Mat,
    pub action: Mat,
}

impl StepNoise {
    pub fn zeros(rows: usize, c: &ModelConfig) -> Self {
        StepNoise {
            state: Mat::zeros((rows, c.latent_dim)),
            action: Mat::zeros((rows, c.action_dim)),
        }
    }
}

/// Scalar loss and its four weighted parts, each averaged over rows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub total: f64,
    /// Negative reconstruction log-likelihood.
    pub recon: f64,
    pub kl_state: f64,
    pub kl_action: f64,
    /// Negative log-likelihood of the dataset action under the policy.
    pub action_nll: f64,
}

impl LossTerms {
    pub fn is_finite(&self) -> bool {
        [self.total, self.recon, self.kl_state, self.kl_action, self.action_nll]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Graph handles produced by [`PhriModel::build_step`].
#[derive(Debug, Clone, Copy)]
pub struct StepVars {
    pub total: Var,
    pub recon: Var,
    pub kl_state: Var,
    pub kl_action: Option<Var>,
    pub action_nll: Option<Var>,
    pub state_mean: Var,
    pub state_sample: Var,
    pub action_sample: Option<Var>,
    pub next_state: Var,
}

/// Values read back from one step.
#[derive(Debug, Clone)]
pub struct StepSample {
    pub state_mean: Mat,
    pub state_sample: Mat,
    pub action_sample: Option<Mat>,
    pub next_state: Mat,
}

/// Mean predictions for one step.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub state_mean: Mat,
    pub obs: Mat,
    pub action: Mat,
}

#[derive(Debug, Clone)]
pub struct PhriModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub nets: Networks,
    pub res_s: ReservoirParams,
    pub res_a: ReservoirParams,
    pub stats: Standardization,
}

fn row(v: &[f64]) -> Mat {
    Mat::from_shape_vec((1, v.len()), v.to_vec()).expect("row vector")
}

fn check_dim(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(PhriError::param(format!("{what} has dimension {got}, expected {want}")));
    }
    Ok(())
}

impl PhriModel {
    pub fn new(config: ModelConfig, stats: Standardization) -> Result<Self> {
        config.validate()?;
        check_dim("observation statistics", stats.obs_mean.len(), config.obs_dim)?;
        check_dim("action statistics", stats.act_mean.len(), config.action_dim)?;
        let mut params = ParamStore::new();
        let nets = Networks::new(&mut params, &config);
        let mode = if config.flags.complex {
            ReservoirMode::Complex
        } else {
            ReservoirMode::Real
        };
        let res_cfg = |input_dim: usize, stream: u64| ReservoirConfig {
            spectral_target: config.spectral_target,
            input_scaling: config.input_scaling,
            ..ReservoirConfig::new(config.n_rc, input_dim, mix(config.seed, stream), mode)
        };
        let res_s = init_reservoir(&res_cfg(config.latent_dim, STREAM_RES_S))?;
        let res_a = init_reservoir(&res_cfg(config.action_dim, STREAM_RES_A))?;
        Ok(PhriModel {
            config,
            params,
            nets,
            res_s,
            res_a,
            stats,
        })
    }

    pub fn zero_histories(&self) -> HistoryFeatures {
        HistoryFeatures {
            h_s: self.res_s.zero_state(),
            h_a: self.res_a.zero_state(),
        }
    }

    /// Builds the per-step loss for a batch.
    ///
    /// With D on, `s_{t+1} = f(s_t, ã_t)` with `ã_t` drawn from the policy;
    /// with D off the decoder reads `s_t` (or `f(s_t, 1)` when configured).
    /// The policy enters the loss only when D or A is on; its likelihood
    /// term only when A is on.
    pub fn build_step(&self, g: &mut Graph<'_>, inp: &StepInputs, noise: &StepNoise) -> StepVars {
        let c = &self.config;
        let n = &self.nets;
        let rows = inp.obs.nrows();
        let hs = g.constant(inp.hist_s.clone());
        let ha = g.constant(inp.hist_a.clone());
        let o = g.constant(inp.obs.clone());
        let o_next = g.constant(inp.next_obs.clone());

        let ps = n.proj_s.forward(g, hs);
        let enc_in = g.concat_cols(o, ps);
        let q = n.encoder.forward(g, enc_in);
        let p_s = n.prior_s.forward(g, ps);
        let eps_s = g.constant(noise.state.clone());
        let s = crate::nn::dist::sample_var(g, q.mean, q.scale, eps_s);

        let mut kl_action = None;
        let mut action_nll = None;
        let mut action_sample = None;
        if c.flags.uses_policy() {
            let pa = n.proj_a.forward(g, ha);
            let pol_in = g.concat_cols(s, pa);
            let pi = n.policy.forward(g, pol_in);
            let p_a = n.prior_a.forward(g, pa);
            let kl = g.kl_normal(pi.mean, pi.scale, p_a.mean, p_a.scale);
            kl_action = Some(g.mean_rows(kl));
            if c.flags.aux_policy {
                let a = g.constant(inp.action.clone());
                let lp = g.normal_log_prob(a, pi.mean, pi.scale);
                let m = g.mean_rows(lp);
                action_nll = Some(g.scale(m, -1.0));
            }
            if c.flags.dynamics {
                let eps_a = g.constant(noise.action.clone());
                action_sample = Some(if c.teacher_forcing {
                    g.constant(inp.action.clone())
                } else {
                    crate::nn::dist::sample_var(g, pi.mean, pi.scale, eps_a)
                });
            }
        }

        let next_state = if c.flags.dynamics {
            self.dynamics_var(g, s, action_sample.expect("policy sampled when D is on"))
        } else {
            match c.disabled_dynamics {
                DisabledDynamics::Bypass => s,
                DisabledDynamics::OnesAction => {
                    let ones = g.constant(Mat::ones((rows, c.action_dim)));
                    self.dynamics_var(g, s, ones)
                }
            }
        };

        let dec = n.decoder.forward(g, next_state);
        let lp = g.student_t_log_prob(o_next, dec.loc, dec.scale, dec.dof);
        let lp = g.mean_rows(lp);
        let recon = g.scale(lp, -1.0);
        let kl_s = g.kl_normal(q.mean, q.scale, p_s.mean, p_s.scale);
        let kl_state = g.mean_rows(kl_s);

        let mut total = recon;
        let t = g.scale(kl_state, c.beta1);
        total = g.add(total, t);
        if let Some(k) = kl_action {
            let t = g.scale(k, c.beta2);
            total = g.add(total, t);
        }
        if let Some(k) = action_nll {
            let t = g.scale(k, c.beta3);
            total = g.add(total, t);
        }
        StepVars {
            total,
            recon,
            kl_state,
            kl_action,
            action_nll,
            state_mean: q.mean,
            state_sample: s,
            action_sample,
            next_state,
        }
    }

    fn dynamics_var(&self, g: &mut Graph<'_>, s: Var, a: Var) -> Var {
        let x = g.concat_cols(s, a);
        let f = self.nets.dynamics.forward(g, x);
        if self.config.residual_dynamics {
            g.add(s, f)
        } else {
            f
        }
    }

    fn check_inputs(&self, inp: &StepInputs, noise: &StepNoise) -> Result<()> {
        let c = &self.config;
        let b = inp.obs.nrows();
        let shapes = [
            ("observation", inp.obs.dim(), (b, c.obs_dim)),
            ("next observation", inp.next_obs.dim(), (b, c.obs_dim)),
            ("action", inp.action.dim(), (b, c.action_dim)),
            ("state history", inp.hist_s.dim(), (b, c.n_rc)),
            ("action history", inp.hist_a.dim(), (b, c.n_rc)),
            ("state noise", noise.state.dim(), (b, c.latent_dim)),
            ("action noise", noise.action.dim(), (b, c.action_dim)),
        ];
        for (what, got, want) in shapes {
            if got != want {
                return Err(PhriError::param(format!("{what} has shape {got:?}, expected {want:?}")));
            }
        }
        Ok(())
    }

    fn read_terms(g: &Graph<'_>, v: &StepVars) -> LossTerms {
        LossTerms {
            total: g.scalar(v.total),
            recon: g.scalar(v.recon),
            kl_state: g.scalar(v.kl_state),
            kl_action: v.kl_action.map_or(0.0, |k| g.scalar(k)),
            action_nll: v.action_nll.map_or(0.0, |k| g.scalar(k)),
        }
    }

    fn read_sample(g: &Graph<'_>, v: &StepVars) -> StepSample {
        StepSample {
            state_mean: g.value(v.state_mean).clone(),
            state_sample: g.value(v.state_sample).clone(),
            action_sample: v.action_sample.map(|a| g.value(a).clone()),
            next_state: g.value(v.next_state).clone(),
        }
    }

    /// Loss value without gradients.
    pub fn loss_step(&self, inp: &StepInputs, noise: &StepNoise) -> Result<(LossTerms, StepSample)> {
        self.check_inputs(inp, noise)?;
        let mut g = Graph::new(&self.params);
        let v = self.build_step(&mut g, inp, noise);
        let terms = Self::read_terms(&g, &v);
        if !terms.is_finite() {
            return Err(PhriError::numeric(format!("non-finite loss {terms:?}")));
        }
        Ok((terms, Self::read_sample(&g, &v)))
    }

    /// Loss value; accumulates its gradient into `grads`.
    pub fn loss_and_grad(
        &self,
        inp: &StepInputs,
        noise: &StepNoise,
        grads: &mut Gradients,
    ) -> Result<(LossTerms, StepSample)> {
        self.check_inputs(inp, noise)?;
        let mut g = Graph::new(&self.params);
        let v = self.build_step(&mut g, inp, noise);
        let terms = Self::read_terms(&g, &v);
        g.backward(v.total, grads)?;
        Ok((terms, Self::read_sample(&g, &v)))
    }

    /// Loss value together with the ReLU sign pattern of the pass.
    pub fn loss_with_mask(&self, inp: &StepInputs, noise: &StepNoise) -> Result<(f64, Vec<bool>)> {
        self.check_inputs(inp, noise)?;
        let mut g = Graph::new(&self.params);
        let v = self.build_step(&mut g, inp, noise);
        Ok((g.scalar(v.total), g.relu_mask()))
    }

    /// Mean predictions: latent mean, decoded next observation and action.
    /// Without D the action prediction is the all-ones vector.
    pub fn predict(&self, obs: &Mat, action: &Mat, hist_s: &Mat, hist_a: &Mat) -> Prediction {
        let c = &self.config;
        let n = &self.nets;
        let rows = obs.nrows();
        let mut g = Graph::new(&self.params);
        let hs = g.constant(hist_s.clone());
        let o = g.constant(obs.clone());
        let ps = n.proj_s.forward(&mut g, hs);
        let enc_in = g.concat_cols(o, ps);
        let q = n.encoder.forward(&mut g, enc_in);
        let s = q.mean;
        let (next, action_pred) = if c.flags.dynamics {
            let ha = g.constant(hist_a.clone());
            let pa = n.proj_a.forward(&mut g, ha);
            let pol_in = g.concat_cols(s, pa);
            let pi = n.policy.forward(&mut g, pol_in);
            let a_in = if c.teacher_forcing {
                g.constant(action.clone())
            } else {
                pi.mean
            };
            (self.dynamics_var(&mut g, s, a_in), g.value(pi.mean).clone())
        } else {
            let ones = Mat::ones((rows, c.action_dim));
            let next = match c.disabled_dynamics {
                DisabledDynamics::Bypass => s,
                DisabledDynamics::OnesAction => {
                    let a = g.constant(ones.clone());
                    self.dynamics_var(&mut g, s, a)
                }
            };
            (next, ones)
        };
        let dec = n.decoder.forward(&mut g, next);
        Prediction {
            state_mean: g.value(s).clone(),
            obs: g.value(dec.loc).clone(),
            action: action_pred,
        }
    }

    /// Real readouts of a set of reservoir states stacked as rows.
    pub fn readout_rows(states: &[ReservoirState]) -> Mat {
        let n = states.first().map_or(0, |s| s.h.len());
        let mut m = Mat::zeros((states.len(), n));
        for (mut r, s) in m.axis_iter_mut(Axis(0)).zip(states) {
            for (dst, h) in r.iter_mut().zip(&s.h) {
                *dst = h.re;
            }
        }
        m
    }

    // Single-sample operations.

    fn hist_rows(&self, h: &HistoryFeatures) -> Result<(Mat, Mat)> {
        check_dim("state history", h.h_s.h.len(), self.config.n_rc)?;
        check_dim("action history", h.h_a.h.len(), self.config.n_rc)?;
        Ok((row(&readout_real(&h.h_s)), row(&readout_real(&h.h_a))))
    }

    fn to_normal(g: &Graph<'_>, mean: Var, scale: Var) -> Result<DiagNormal> {
        DiagNormal::new(g.value(mean).row(0).to_vec(), g.value(scale).row(0).to_vec())
    }

    /// Trainable low-dimensional projections of the two histories.
    pub fn projections(&self, h: &HistoryFeatures) -> Result<(Vec<f64>, Vec<f64>)> {
        let (hs, ha) = self.hist_rows(h)?;
        let mut g = Graph::new(&self.params);
        let hs = g.constant(hs);
        let ha = g.constant(ha);
        let ps = self.nets.proj_s.forward(&mut g, hs);
        let pa = self.nets.proj_a.forward(&mut g, ha);
        Ok((g.value(ps).row(0).to_vec(), g.value(pa).row(0).to_vec()))
    }

    /// `q(s_t | o_t, h^s_{t-1})` for a standardized observation.
    pub fn encode_state(&self, obs: &[f64], h: &HistoryFeatures) -> Result<DiagNormal> {
        check_dim("observation", obs.len(), self.config.obs_dim)?;
        let (hs, _) = self.hist_rows(h)?;
        let mut g = Graph::new(&self.params);
        let hs = g.constant(hs);
        let o = g.constant(row(obs));
        let ps = self.nets.proj_s.forward(&mut g, hs);
        let x = g.concat_cols(o, ps);
        let q = self.nets.encoder.forward(&mut g, x);
        Self::to_normal(&g, q.mean, q.scale)
    }

    /// `p(s_t | h^s_{t-1})`.
    pub fn prior_state(&self, h: &HistoryFeatures) -> Result<DiagNormal> {
        let (hs, _) = self.hist_rows(h)?;
        let mut g = Graph::new(&self.params);
        let hs = g.constant(hs);
        let ps = self.nets.proj_s.forward(&mut g, hs);
        let p = self.nets.prior_s.forward(&mut g, ps);
        Self::to_normal(&g, p.mean, p.scale)
    }

    /// `π(a_t | s_t, h^a_{t-1})`.
    pub fn policy(&self, s: &[f64], h: &HistoryFeatures) -> Result<DiagNormal> {
        check_dim("latent state", s.len(), self.config.latent_dim)?;
        let (_, ha) = self.hist_rows(h)?;
        let mut g = Graph::new(&self.params);
        let ha = g.constant(ha);
        let sv = g.constant(row(s));
        let pa = self.nets.proj_a.forward(&mut g, ha);
        let x = g.concat_cols(sv, pa);
        let pi = self.nets.policy.forward(&mut g, x);
        Self::to_normal(&g, pi.mean, pi.scale)
    }

    /// `p(a_t | h^a_{t-1})`.
    pub fn prior_action(&self, h: &HistoryFeatures) -> Result<DiagNormal> {
        let (_, ha) = self.hist_rows(h)?;
        let mut g = Graph::new(&self.params);
        let ha = g.constant(ha);
        let pa = self.nets.proj_a.forward(&mut g, ha);
        let p = self.nets.prior_a.forward(&mut g, pa);
        Self::to_normal(&g, p.mean, p.scale)
    }

    /// `s_{t+1} = f(s_t, ã_t)`; depends on nothing but its two arguments.
    pub fn dynamics(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        check_dim("latent state", s.len(), self.config.latent_dim)?;
        check_dim("action", a.len(), self.config.action_dim)?;
        let mut g = Graph::new(&self.params);
        let sv = g.constant(row(s));
        let av = g.constant(row(a));
        let out = self.dynamics_var(&mut g, sv, av);
        Ok(g.value(out).row(0).to_vec())
    }

    /// `p(o_{t+1} | s_{t+1})` in standardized observation units.
    pub fn decode(&self, s: &[f64]) -> Result<DiagStudentT> {
        check_dim("latent state", s.len(), self.config.latent_dim)?;
        let mut g = Graph::new(&self.params);
        let sv = g.constant(row(s));
        let d = self.nets.decoder.forward(&mut g, sv);
        DiagStudentT::new(
            g.value(d.loc).row(0).to_vec(),
            g.value(d.scale).row(0).to_vec(),
            g.value(d.dof).row(0).to_vec(),
        )
    }

    /// Advances both reservoirs with `(s_t, a_t)`.
    pub fn step_histories(&self, h: &HistoryFeatures, s: &[f64], a: &[f64]) -> Result<HistoryFeatures> {
        Ok(HistoryFeatures {
            h_s: self.res_s.step(&h.h_s, s)?,
            h_a: self.res_a.step(&h.h_a, a)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::Flags;

    fn tiny(flags: Flags) -> PhriModel {
        let cfg = ModelConfig {
            flags,
            obs_dim: 2,
            latent_dim: 2,
            action_dim: 2,
            n_rc: 8,
            width: 8,
            proj_dim: 2,
            ..ModelConfig::default()
        };
        let stats = Standardization {
            obs_mean: vec![0.0; 2],
            obs_std: vec![1.0; 2],
            act_mean: vec![0.0; 2],
            act_std: vec![1.0; 2],
        };
        PhriModel::new(cfg, stats).unwrap()
    }

    fn inputs(m: &PhriModel, rows: usize) -> (StepInputs, StepNoise) {
        let c = &m.config;
        let f = |r: usize, k: usize, s: f64| Mat::from_shape_fn((r, k), |(i, j)| ((i * 7 + j * 3) as f64 * s).sin());
        (
            StepInputs {
                obs: f(rows, c.obs_dim, 0.3),
                action: f(rows, c.action_dim, 0.7),
                next_obs: f(rows, c.obs_dim, 0.4),
                hist_s: f(rows, c.n_rc, 0.11),
                hist_a: f(rows, c.n_rc, 0.13),
            },
            StepNoise {
                state: f(rows, c.latent_dim, 0.9),
                action: f(rows, c.action_dim, 1.1),
            },
        )
    }

    #[test]
    fn zero_betas_leave_reconstruction() {
        let mut m = tiny(Flags::FULL);
        m.config.beta1 = 0.0;
        m.config.beta2 = 0.0;
        m.config.beta3 = 0.0;
        let (i, n) = inputs(&m, 3);
        let (t, _) = m.loss_step(&i, &n).unwrap();
        assert_eq!(t.total, t.recon);
    }

    #[test]
    fn wrong_shapes_rejected() {
        let m = tiny(Flags::FULL);
        let (mut i, n) = inputs(&m, 2);
        i.hist_s = Mat::zeros((2, 5));
        assert!(matches!(m.loss_step(&i, &n), Err(PhriError::Parameter(_))));
        assert!(m.dynamics(&[0.0; 3], &[0.0; 2]).is_err());
        assert!(m.encode_state(&[0.0; 5], &m.zero_histories()).is_err());
    }

    #[test]
    fn single_sample_ops_are_consistent() {
        let m = tiny(Flags::FULL);
        let h = m.zero_histories();
        let h = m.step_histories(&h, &[0.3, -0.2], &[1.0, 0.5]).unwrap();
        let q1 = m.encode_state(&[0.1, 0.2], &h).unwrap();
        let q2 = m.encode_state(&[0.1, 0.2], &h).unwrap();
        assert_eq!(q1, q2);
        assert!(q1.scale.iter().all(|&s| s > 0.0));
        let p = m.prior_state(&h).unwrap();
        assert!(crate::nn::kl_diag_normal(&q1, &p).unwrap() >= 0.0);
        let pi = m.policy(&q1.mean, &h).unwrap();
        let pa = m.prior_action(&h).unwrap();
        assert!(crate::nn::kl_diag_normal(&pi, &pa).unwrap().is_finite());
        let s1 = m.dynamics(&q1.mean, &pi.mean).unwrap();
        assert_eq!(s1, m.dynamics(&q1.mean, &pi.mean).unwrap());
        let d = m.decode(&s1).unwrap();
        assert!(d.log_prob(&[0.0, 1.0]).unwrap().is_finite());
    }
}
