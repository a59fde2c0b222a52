//! Reverse-mode autodiff and the network building blocks.

pub mod checkpoint;
pub mod dist;
pub mod kernels;
pub mod layers;
pub mod optim;
pub mod tape;

pub use dist::{kl_diag_normal, reparameterized_sample, DiagNormal, DiagStudentT};
pub use layers::{FcnStack, LayerNorm, Linear, Mlp, NormalHead, NormalVar, StudentTHead, StudentTVar};
pub use optim::{AmsGrad, AmsGradConfig};
pub use tape::{Gradients, Graph, Mat, ParamId, ParamStore, Var};

use crate::error::{PhriError, Result};

/// Layer normalization of a single vector, outside any graph.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(PhriError::param("layer norm needs at least two features"));
    }
    if gain.len() != x.len() || bias.len() != x.len() {
        return Err(PhriError::param("layer norm gain/bias dimension mismatch"));
    }
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let row = |v: &[f64]| Mat::from_shape_vec((1, v.len()), v.to_vec()).unwrap();
    let xv = g.constant(row(x));
    let gv = g.constant(row(gain));
    let bv = g.constant(row(bias));
    let out = g.layer_norm(xv, gv, bv);
    Ok(g.value(out).iter().copied().collect())
}
