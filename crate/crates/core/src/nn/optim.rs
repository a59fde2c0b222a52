use super::tape::{Gradients, Mat, ParamStore};
use crate::error::{PhriError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmsGradConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AmsGradConfig {
    fn default() -> Self {
        AmsGradConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-tensor optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub steps: u64,
    pub m: Mat,
    pub v: Mat,
    pub v_max: Mat,
}

/// AMSGrad: Adam with a running maximum of the second moment and bias
/// correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AmsGrad {
    pub config: AmsGradConfig,
    pub state: Vec<MomentState>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// Names of tensors whose gradient was non-finite; they were left
    /// untouched.
    pub skipped: Vec<String>,
}

impl AmsGrad {
    pub fn new(params: &ParamStore, config: AmsGradConfig) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(PhriError::param(format!("learning rate must be positive, got {}", config.lr)));
        }
        let state = params
            .values()
            .iter()
            .map(|v| MomentState {
                steps: 0,
                m: Mat::zeros(v.raw_dim()),
                v: Mat::zeros(v.raw_dim()),
                v_max: Mat::zeros(v.raw_dim()),
            })
            .collect();
        Ok(AmsGrad { config, state })
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> StepReport {
        let c = self.config;
        let mut report = StepReport::default();
        for (i, (p, g)) in params
            .values_mut()
            .iter_mut()
            .zip(&grads.grads)
            .enumerate()
        {
            if g.iter().any(|v| !v.is_finite()) {
                report.skipped.push(i.to_string());
                continue;
            }
            let s = &mut self.state[i];
            s.steps += 1;
            let bc1 = 1.0 - c.beta1.powi(s.steps as i32);
            let bc2 = 1.0 - c.beta2.powi(s.steps as i32);
            let step = c.lr / bc1;
            let sqrt_bc2 = bc2.sqrt();
            ndarray::Zip::from(p)
                .and(g)
                .and(&mut s.m)
                .and(&mut s.v)
                .and(&mut s.v_max)
                .for_each(|p, &g, m, v, vm| {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    *vm = vm.max(*v);
                    *p -= step * *m / (vm.sqrt() / sqrt_bc2 + c.eps);
                });
        }
        if !report.skipped.is_empty() {
            report.skipped = report
                .skipped
                .iter()
                .map(|i| params.names()[i.parse::<usize>().unwrap()].clone())
                .collect();
            log::warn!("skipped non-finite gradients for {:?}", report.skipped);
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Mat::from_elem((1, 1), x));
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar_store(1.25);
        let mut opt = AmsGrad::new(&p, AmsGradConfig::default()).unwrap();
        let g = Gradients::zeros_like(&p);
        for _ in 0..50 {
            opt.step(&mut p, &g);
        }
        assert_eq!(p.values()[0][[0, 0]], 1.25);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_store(0.0);
        let cfg = AmsGradConfig::default();
        let mut opt = AmsGrad::new(&p, cfg).unwrap();
        let mut g = Gradients::zeros_like(&p);
        g.grads[0][[0, 0]] = 3.7;
        opt.step(&mut p, &g);
        assert!((p.values()[0][[0, 0]] + cfg.lr).abs() < 1e-9);
        g.grads[0][[0, 0]] = -0.02;
        let mut q = scalar_store(0.0);
        let mut opt = AmsGrad::new(&q, cfg).unwrap();
        opt.step(&mut q, &g);
        assert!((q.values()[0][[0, 0]] - cfg.lr).abs() < 1e-6);
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(x, y) = (x - 3)^2 + 10 (y + 1)^2, minimum at (3, -1)
        let mut s = ParamStore::new();
        s.add("xy", Mat::from_shape_vec((1, 2), vec![0.0, 0.0]).unwrap());
        let cfg = AmsGradConfig {
            lr: 0.05,
            ..Default::default()
        };
        let mut opt = AmsGrad::new(&s, cfg).unwrap();
        let mut g = Gradients::zeros_like(&s);
        let mut converged_at = None;
        for it in 0..5000 {
            let (x, y) = (s.values()[0][[0, 0]], s.values()[0][[0, 1]]);
            if (x - 3.0).abs() < 1e-6 && (y + 1.0).abs() < 1e-6 {
                converged_at = Some(it);
                break;
            }
            g.grads[0][[0, 0]] = 2.0 * (x - 3.0);
            g.grads[0][[0, 1]] = 20.0 * (y + 1.0);
            opt.step(&mut s, &g);
        }
        assert!(converged_at.is_some(), "final {:?}", s.values()[0]);
    }

    #[test]
    fn non_finite_gradient_skips_tensor() {
        let mut s = ParamStore::new();
        s.add("a", Mat::from_elem((1, 1), 1.0));
        s.add("b", Mat::from_elem((1, 1), 1.0));
        let mut opt = AmsGrad::new(&s, AmsGradConfig::default()).unwrap();
        let mut g = Gradients::zeros_like(&s);
        g.grads[0][[0, 0]] = f64::NAN;
        g.grads[1][[0, 0]] = 1.0;
        let rep = opt.step(&mut s, &g);
        assert_eq!(rep.skipped, vec!["a".to_string()]);
        assert_eq!(s.values()[0][[0, 0]], 1.0);
        assert!(s.values()[1][[0, 0]] < 1.0);
        assert_eq!(opt.state[0].steps, 0);
    }

    #[test]
    fn rejects_non_positive_lr() {
        let s = scalar_store(0.0);
        assert!(AmsGrad::new(&s, AmsGradConfig { lr: 0.0, ..Default::default() }).is_err());
    }
}
