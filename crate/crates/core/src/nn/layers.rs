use super::kernels::softplus_inv;
use super::tape::{Graph, Mat, ParamId, ParamStore, Var};
use rand::Rng;

/// Floor added after softplus on every positive output.
pub const POSITIVE_FLOOR: f64 = 1e-6;

/// Initial student-t degrees of freedom.
pub const INITIAL_DOF: f64 = 10.0;

/// Affine map `x W + b` with `W: in × out`, initialized uniformly in
/// `±1/sqrt(in)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = Mat::from_shape_fn((in_dim, out_dim), |_| rng.random_range(-bound..bound));
        let b = Mat::from_shape_fn((1, out_dim), |_| rng.random_range(-bound..bound));
        Linear {
            weight: store.add(format!("{name}.weight"), w),
            bias: store.add(format!("{name}.bias"), b),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        LayerNorm {
            gain: store.add(format!("{name}.gain"), Mat::ones((1, width))),
            bias: store.add(format!("{name}.bias"), Mat::zeros((1, width))),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        g.layer_norm(x, gain, bias)
    }
}

/// Two hidden layers, each affine → layer norm → ReLU.
#[derive(Debug, Clone)]
pub struct FcnStack {
    layers: Vec<(Linear, LayerNorm)>,
    pub in_dim: usize,
    pub width: usize,
}

impl FcnStack {
    pub const DEPTH: usize = 2;

    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        width: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = (0..Self::DEPTH)
            .map(|i| {
                let d = if i == 0 { in_dim } else { width };
                (
                    Linear::new(store, &format!("{name}.fc{i}"), d, width, rng),
                    LayerNorm::new(store, &format!("{name}.ln{i}"), width),
                )
            })
            .collect();
        FcnStack {
            layers,
            in_dim,
            width,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, mut x: Var) -> Var {
        for (lin, ln) in &self.layers {
            let a = lin.forward(g, x);
            let n = ln.forward(g, a);
            x = g.relu(n);
        }
        x
    }
}

fn positive(g: &mut Graph<'_>, x: Var) -> Var {
    let sp = g.softplus(x);
    g.add_scalar(sp, POSITIVE_FLOOR)
}

/// Diagonal-normal head on top of an [`FcnStack`].
#[derive(Debug, Clone)]
pub struct NormalHead {
    pub trunk: FcnStack,
    pub mean: Linear,
    pub scale: Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct NormalVar {
    pub mean: Var,
    pub scale: Var,
}

impl NormalHead {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        width: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let trunk = FcnStack::new(store, name, in_dim, width, rng);
        NormalHead {
            mean: Linear::new(store, &format!("{name}.mean"), width, out_dim, rng),
            scale: Linear::new(store, &format!("{name}.scale"), width, out_dim, rng),
            trunk,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> NormalVar {
        let h = self.trunk.forward(g, x);
        let mean = self.mean.forward(g, h);
        let raw = self.scale.forward(g, h);
        NormalVar {
            mean,
            scale: positive(g, raw),
        }
    }
}

/// Diagonal student-t head; degrees of freedom are learned per output and
/// start near [`INITIAL_DOF`].
#[derive(Debug, Clone)]
pub struct StudentTHead {
    pub trunk: FcnStack,
    pub loc: Linear,
    pub scale: Linear,
    pub dof: Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct StudentTVar {
    pub loc: Var,
    pub scale: Var,
    pub dof: Var,
}

impl StudentTHead {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        width: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let trunk = FcnStack::new(store, name, in_dim, width, rng);
        let loc = Linear::new(store, &format!("{name}.loc"), width, out_dim, rng);
        let scale = Linear::new(store, &format!("{name}.scale"), width, out_dim, rng);
        let dof = Linear::new(store, &format!("{name}.dof"), width, out_dim, rng);
        store.get_mut(dof.weight).mapv_inplace(|w| w * 0.01);
        store
            .get_mut(dof.bias)
            .fill(softplus_inv(INITIAL_DOF - POSITIVE_FLOOR));
        StudentTHead {
            trunk,
            loc,
            scale,
            dof,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> StudentTVar {
        let h = self.trunk.forward(g, x);
        let loc = self.loc.forward(g, h);
        let raw_scale = self.scale.forward(g, h);
        let raw_dof = self.dof.forward(g, h);
        StudentTVar {
            loc,
            scale: positive(g, raw_scale),
            dof: positive(g, raw_dof),
        }
    }
}

/// Deterministic [`FcnStack`] followed by an affine output.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub trunk: FcnStack,
    pub out: Linear,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        width: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let trunk = FcnStack::new(store, name, in_dim, width, rng);
        Mlp {
            out: Linear::new(store, &format!("{name}.out"), width, out_dim, rng),
            trunk,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        let h = self.trunk.forward(g, x);
        self.out.forward(g, h)
    }
}
