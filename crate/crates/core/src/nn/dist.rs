//! Diagonal distributions as plain values, used outside the training graph.

use super::kernels;
use super::tape::{Graph, Var};
use crate::error::{PhriError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DiagNormal {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl DiagNormal {
    pub fn new(mean: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if mean.len() != scale.len() {
            return Err(PhriError::param("normal mean/scale dimension mismatch"));
        }
        if scale.iter().any(|s| !(*s > 0.0)) {
            return Err(PhriError::param("normal scale must be positive"));
        }
        Ok(DiagNormal { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(PhriError::param("normal log_prob dimension mismatch"));
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| kernels::normal_log_density(*x, *m, *s))
            .sum())
    }

    /// `mean + scale ⊙ noise`.
    pub fn sample(&self, noise: &[f64]) -> Result<Vec<f64>> {
        reparameterized_sample(self, noise)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagStudentT {
    pub loc: Vec<f64>,
    pub scale: Vec<f64>,
    pub dof: Vec<f64>,
}

impl DiagStudentT {
    pub fn new(loc: Vec<f64>, scale: Vec<f64>, dof: Vec<f64>) -> Result<Self> {
        if loc.len() != scale.len() || loc.len() != dof.len() {
            return Err(PhriError::param("student-t parameter dimension mismatch"));
        }
        if scale.iter().chain(&dof).any(|s| !(*s > 0.0)) {
            return Err(PhriError::param("student-t scale and dof must be positive"));
        }
        Ok(DiagStudentT { loc, scale, dof })
    }

    pub fn dim(&self) -> usize {
        self.loc.len()
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(PhriError::param("student-t log_prob dimension mismatch"));
        }
        Ok((0..x.len())
            .map(|i| kernels::student_t_log_density(x[i], self.loc[i], self.scale[i], self.dof[i]))
            .sum())
    }
}

/// Closed-form `KL(q ‖ p)` summed over dimensions.
pub fn kl_diag_normal(q: &DiagNormal, p: &DiagNormal) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(PhriError::param("KL dimension mismatch"));
    }
    Ok((0..q.dim())
        .map(|i| kernels::kl_normal(q.mean[i], q.scale[i], p.mean[i], p.scale[i]))
        .sum())
}

pub fn reparameterized_sample(d: &DiagNormal, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != d.dim() {
        return Err(PhriError::param("noise dimension mismatch"));
    }
    Ok(d.mean
        .iter()
        .zip(&d.scale)
        .zip(noise)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

/// Reparameterized sample inside a graph; gradients reach mean and scale.
pub fn sample_var(g: &mut Graph<'_>, mean: Var, scale: Var, noise: Var) -> Var {
    let e = g.mul(scale, noise);
    g.add(mean, e)
}
