//! Reverse-mode automatic differentiation over row-batched matrices.
//!
//! A [`Graph`] records every operation of one forward pass in creation order,
//! which is already a topological order, so [`Graph::backward`] is a single
//! reverse sweep that visits each node once. Trainable tensors live in a
//! [`ParamStore`]; the graph refers to them by [`ParamId`] and writes their
//! gradients into a [`Gradients`] buffer.

use super::kernels;
use crate::error::{PhriError, Result};
use ndarray::{Array2, Axis, Zip};

pub type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Mat] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Mat] {
        &mut self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

/// Gradient buffer aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub grads: Vec<Mat>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients {
            grads: store.values.iter().map(|v| Mat::zeros(v.raw_dim())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.grads[id.0]
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn scale(&mut self, k: f64) {
        self.grads.iter_mut().for_each(|g| *g *= k);
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .map(|g| g.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.global_norm();
        if n.is_finite() && n > max_norm {
            self.scale(max_norm / n);
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Softplus(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    ConcatCols(Var, Var),
    SumAll(Var),
    MeanRows(Var),
    NormalLogProb {
        x: Var,
        mean: Var,
        scale: Var,
    },
    StudentTLogProb {
        x: Var,
        loc: Var,
        scale: Var,
        dof: Var,
    },
    KlNormal {
        mq: Var,
        sq: Var,
        mp: Var,
        sp: Var,
    },
}

struct Node {
    value: Mat,
    op: Op,
    requires_grad: bool,
}

/// One forward pass. Borrowing the store keeps parameters immutable while
/// the graph is alive.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(256),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Mat {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.len(), 1);
        m[[0, 0]]
    }

    /// Sign pattern of every ReLU input in the graph, in node order. Two
    /// passes with equal masks lie on the same linear piece.
    pub fn relu_mask(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Relu(a) = node.op {
                out.extend(self.value(a).iter().map(|&x| x > 0.0));
            }
        }
        out
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let v = self.push(Mat::zeros((0, 0)), Op::Param(id), true);
        self.param_nodes[id.0] = Some(v);
        v
    }

    fn shape_check(&self, a: Var, b: Var, what: &str) {
        assert_eq!(
            self.value(a).dim(),
            self.value(b).dim(),
            "{what}: shape mismatch"
        );
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    /// Adds a `1 × n` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let out = self.value(x) + self.value(row);
        let rg = self.rg(x) || self.rg(row);
        self.push(out, Op::AddRow(x, row), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.shape_check(a, b, "add");
        let out = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.shape_check(a, b, "sub");
        let out = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.shape_check(a, b, "mul");
        let out = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a) * k;
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, k), rg)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a) + k;
        let rg = self.rg(a);
        self.push(out, Op::AddScalar(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| v.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(kernels::softplus);
        let rg = self.rg(a);
        self.push(out, Op::Softplus(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::exp);
        let rg = self.rg(a);
        self.push(out, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::ln);
        let rg = self.rg(a);
        self.push(out, Op::Log(a), rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| v * v);
        let rg = self.rg(a);
        self.push(out, Op::Square(a), rg)
    }

    /// Per-row normalization `(x - mean) / sqrt(var + ε) ⊙ gain + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols();
        assert!(n >= 2, "layer norm needs at least two features");
        let mut xhat = Mat::zeros(xv.raw_dim());
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for (row, mut out) in xv.rows().into_iter().zip(xhat.rows_mut()) {
            let mean = row.sum() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            Zip::from(&mut out).and(&row).for_each(|o, &v| *o = (v - mean) * inv);
            inv_std.push(inv);
        }
        let out = &xhat * self.value(gain) + self.value(bias);
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let out = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("concat: row counts differ");
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::ConcatCols(a, b), rg)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Mat::from_elem((1, 1), s), Op::SumAll(a), rg)
    }

    /// Column means, `1 × n`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = v.sum_axis(Axis(0)).insert_axis(Axis(0)) / v.nrows() as f64;
        let rg = self.rg(a);
        self.push(out, Op::MeanRows(a), rg)
    }

    /// Row-wise diagonal-normal log density, `B × 1`.
    pub fn normal_log_prob(&mut self, x: Var, mean: Var, scale: Var) -> Var {
        self.shape_check(x, mean, "normal_log_prob");
        self.shape_check(x, scale, "normal_log_prob");
        let (xv, mv, sv) = (self.value(x), self.value(mean), self.value(scale));
        let mut out = Mat::zeros((xv.nrows(), 1));
        for r in 0..xv.nrows() {
            let mut acc = 0.0;
            for c in 0..xv.ncols() {
                acc += kernels::normal_log_density(xv[[r, c]], mv[[r, c]], sv[[r, c]]);
            }
            out[[r, 0]] = acc;
        }
        let rg = self.rg(x) || self.rg(mean) || self.rg(scale);
        self.push(out, Op::NormalLogProb { x, mean, scale }, rg)
    }

    /// Row-wise diagonal student-t log density, `B × 1`.
    pub fn student_t_log_prob(&mut self, x: Var, loc: Var, scale: Var, dof: Var) -> Var {
        self.shape_check(x, loc, "student_t_log_prob");
        self.shape_check(x, scale, "student_t_log_prob");
        self.shape_check(x, dof, "student_t_log_prob");
        let (xv, lv, sv, dv) = (self.value(x), self.value(loc), self.value(scale), self.value(dof));
        let mut out = Mat::zeros((xv.nrows(), 1));
        for r in 0..xv.nrows() {
            let mut acc = 0.0;
            for c in 0..xv.ncols() {
                acc += kernels::student_t_log_density(
                    xv[[r, c]],
                    lv[[r, c]],
                    sv[[r, c]],
                    dv[[r, c]],
                );
            }
            out[[r, 0]] = acc;
        }
        let rg = self.rg(x) || self.rg(loc) || self.rg(scale) || self.rg(dof);
        self.push(out, Op::StudentTLogProb { x, loc, scale, dof }, rg)
    }

    /// Row-wise `KL(N(mq, sq²) ‖ N(mp, sp²))` summed over columns, `B × 1`.
    pub fn kl_normal(&mut self, mq: Var, sq: Var, mp: Var, sp: Var) -> Var {
        self.shape_check(mq, sq, "kl_normal");
        self.shape_check(mq, mp, "kl_normal");
        self.shape_check(mq, sp, "kl_normal");
        let (a, b, c, d) = (self.value(mq), self.value(sq), self.value(mp), self.value(sp));
        let mut out = Mat::zeros((a.nrows(), 1));
        for r in 0..a.nrows() {
            let mut acc = 0.0;
            for k in 0..a.ncols() {
                acc += kernels::kl_normal(a[[r, k]], b[[r, k]], c[[r, k]], d[[r, k]]);
            }
            out[[r, 0]] = acc;
        }
        let rg = self.rg(mq) || self.rg(sq) || self.rg(mp) || self.rg(sp);
        self.push(out, Op::KlNormal { mq, sq, mp, sp }, rg)
    }

    /// Accumulates `d root / d param` into `grads`. `root` must be `1 × 1`.
    pub fn backward(&self, root: Var, grads: &mut Gradients) -> Result<()> {
        let root_val = self.value(root);
        if root_val.dim() != (1, 1) {
            return Err(PhriError::param("backward needs a scalar root"));
        }
        if !root_val[[0, 0]].is_finite() {
            return Err(PhriError::numeric(format!(
                "non-finite loss {}",
                root_val[[0, 0]]
            )));
        }
        let mut adj: Vec<Option<Mat>> = (0..=root.0).map(|_| None).collect();
        adj[root.0] = Some(Mat::from_elem((1, 1), 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, g, &mut adj, grads);
        }
        Ok(())
    }

    fn propagate(
        &self,
        op: &Op,
        out_val: &Mat,
        g: Mat,
        adj: &mut [Option<Mat>],
        grads: &mut Gradients,
    ) {
        let acc = |adj: &mut [Option<Mat>], v: Var, d: Mat| {
            if !self.rg(v) {
                return;
            }
            match &mut adj[v.0] {
                Some(a) => *a += &d,
                slot @ None => *slot = Some(d),
            }
        };
        match op {
            Op::Leaf => {}
            Op::Param(id) => grads.grads[id.0] += &g,
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    acc(adj, *a, g.dot(&self.value(*b).t()));
                }
                if self.rg(*b) {
                    acc(adj, *b, self.value(*a).t().dot(&g));
                }
            }
            Op::AddRow(x, row) => {
                if self.rg(*row) {
                    acc(adj, *row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                acc(adj, *x, g);
            }
            Op::Add(a, b) => {
                if self.rg(*b) {
                    acc(adj, *b, g.clone());
                }
                acc(adj, *a, g);
            }
            Op::Sub(a, b) => {
                if self.rg(*b) {
                    acc(adj, *b, -&g);
                }
                acc(adj, *a, g);
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(adj, *a, &g * self.value(*b));
                }
                if self.rg(*b) {
                    acc(adj, *b, &g * self.value(*a));
                }
            }
            Op::Scale(a, k) => acc(adj, *a, g * *k),
            Op::AddScalar(a) => acc(adj, *a, g),
            Op::Relu(a) => {
                let mut d = g;
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                acc(adj, *a, d);
            }
            Op::Softplus(a) => {
                let mut d = g;
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| *d *= kernels::sigmoid(x));
                acc(adj, *a, d);
            }
            Op::Exp(a) => acc(adj, *a, g * out_val),
            Op::Log(a) => acc(adj, *a, g / self.value(*a)),
            Op::Square(a) => acc(adj, *a, g * self.value(*a) * 2.0),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                if self.rg(*gain) {
                    acc(adj, *gain, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if self.rg(*bias) {
                    acc(adj, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if self.rg(*x) {
                    let dxhat = &g * self.value(*gain);
                    let n = xhat.ncols() as f64;
                    let mut dx = Mat::zeros(xhat.raw_dim());
                    for r in 0..xhat.nrows() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let s1 = dh.sum();
                        let s2 = dh.dot(&xh);
                        let inv = inv_std[r];
                        Zip::from(dx.row_mut(r))
                            .and(&dh)
                            .and(&xh)
                            .for_each(|o, &d, &h| *o = inv / n * (n * d - s1 - h * s2));
                    }
                    acc(adj, *x, dx);
                }
            }
            Op::ConcatCols(a, b) => {
                let na = self.value(*a).ncols();
                if self.rg(*a) {
                    acc(adj, *a, g.slice(ndarray::s![.., ..na]).to_owned());
                }
                if self.rg(*b) {
                    acc(adj, *b, g.slice(ndarray::s![.., na..]).to_owned());
                }
            }
            Op::SumAll(a) => {
                let s = g[[0, 0]];
                acc(adj, *a, Mat::from_elem(self.value(*a).raw_dim(), s));
            }
            Op::MeanRows(a) => {
                let av = self.value(*a);
                let k = 1.0 / av.nrows() as f64;
                let mut d = Mat::zeros(av.raw_dim());
                for mut row in d.rows_mut() {
                    row.assign(&(&g.row(0) * k));
                }
                acc(adj, *a, d);
            }
            Op::NormalLogProb { x, mean, scale } => {
                let (xv, mv, sv) = (self.value(*x), self.value(*mean), self.value(*scale));
                let mut dx = Mat::zeros(xv.raw_dim());
                let mut dm = Mat::zeros(xv.raw_dim());
                let mut ds = Mat::zeros(xv.raw_dim());
                for r in 0..xv.nrows() {
                    let gr = g[[r, 0]];
                    for c in 0..xv.ncols() {
                        let (gx, gm, gs) =
                            kernels::normal_log_density_grad(xv[[r, c]], mv[[r, c]], sv[[r, c]]);
                        dx[[r, c]] = gr * gx;
                        dm[[r, c]] = gr * gm;
                        ds[[r, c]] = gr * gs;
                    }
                }
                acc(adj, *x, dx);
                acc(adj, *mean, dm);
                acc(adj, *scale, ds);
            }
            Op::StudentTLogProb { x, loc, scale, dof } => {
                let (xv, lv, sv, dv) = (
                    self.value(*x),
                    self.value(*loc),
                    self.value(*scale),
                    self.value(*dof),
                );
                let mut dx = Mat::zeros(xv.raw_dim());
                let mut dl = Mat::zeros(xv.raw_dim());
                let mut ds = Mat::zeros(xv.raw_dim());
                let mut dd = Mat::zeros(xv.raw_dim());
                for r in 0..xv.nrows() {
                    let gr = g[[r, 0]];
                    for c in 0..xv.ncols() {
                        let [gx, gl, gs, gd] = kernels::student_t_log_density_grad(
                            xv[[r, c]],
                            lv[[r, c]],
                            sv[[r, c]],
                            dv[[r, c]],
                        );
                        dx[[r, c]] = gr * gx;
                        dl[[r, c]] = gr * gl;
                        ds[[r, c]] = gr * gs;
                        dd[[r, c]] = gr * gd;
                    }
                }
                acc(adj, *x, dx);
                acc(adj, *loc, dl);
                acc(adj, *scale, ds);
                acc(adj, *dof, dd);
            }
            Op::KlNormal { mq, sq, mp, sp } => {
                let (a, b, c, d) = (
                    self.value(*mq),
                    self.value(*sq),
                    self.value(*mp),
                    self.value(*sp),
                );
                let mut da = Mat::zeros(a.raw_dim());
                let mut db = Mat::zeros(a.raw_dim());
                let mut dc = Mat::zeros(a.raw_dim());
                let mut dd = Mat::zeros(a.raw_dim());
                for r in 0..a.nrows() {
                    let gr = g[[r, 0]];
                    for k in 0..a.ncols() {
                        let [g1, g2, g3, g4] =
                            kernels::kl_normal_grad(a[[r, k]], b[[r, k]], c[[r, k]], d[[r, k]]);
                        da[[r, k]] = gr * g1;
                        db[[r, k]] = gr * g2;
                        dc[[r, k]] = gr * g3;
                        dd[[r, k]] = gr * g4;
                    }
                }
                acc(adj, *mq, da);
                acc(adj, *sq, db);
                acc(adj, *mp, dc);
                acc(adj, *sp, dd);
            }
        }
    }
}
