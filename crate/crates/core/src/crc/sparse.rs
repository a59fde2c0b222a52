//! Compressed-sparse-row complex matrices and their spectral radius.

use crate::error::{PhriError, Result};
use num_complex::Complex64;

/// Row-major CSR matrix with complex entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn from_parts(
        rows: usize,
        cols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if indptr.len() != rows + 1 || indptr[0] != 0 || indices.len() != values.len() {
            return Err(PhriError::param("inconsistent CSR layout"));
        }
        if *indptr.last().unwrap() != indices.len() || indptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(PhriError::param("CSR row pointers are not monotone"));
        }
        if indices.iter().any(|&c| c >= cols) {
            return Err(PhriError::param("CSR column index out of range"));
        }
        Ok(CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Builds from a dense row-major slice, dropping exact zeros.
    pub fn from_dense(rows: usize, cols: usize, dense: &[Complex64]) -> Result<Self> {
        if dense.len() != rows * cols {
            return Err(PhriError::param(format!(
                "dense buffer has {} entries, expected {rows}x{cols}",
                dense.len()
            )));
        }
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..rows {
            for c in 0..cols {
                let v = dense[r * cols + c];
                if v != Complex64::new(0.0, 0.0) {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn scale(&mut self, k: f64) {
        for v in &mut self.values {
            *v *= k;
        }
    }

    pub fn to_dense(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows * self.cols];
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[r * self.cols + self.indices[k]] = self.values[k];
            }
        }
        out
    }

    /// `out[r] += Σ_c A[r, c] x[c]`.
    #[inline]
    pub fn mul_add(&self, x: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *o += acc;
        }
    }

    /// Same as [`mul_add`](Self::mul_add) for a real right-hand side.
    #[inline]
    pub fn mul_add_real(&self, x: &[f64], out: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *o += acc;
        }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        self.mul_add(x, &mut out);
        out
    }

    /// True when the directed graph of nonzeros contains no cycle, in which
    /// case the matrix is nilpotent and its spectral radius is exactly zero.
    pub fn is_structurally_nilpotent(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let n = self.rows;
        let mut indegree = vec![0usize; n];
        for &c in &self.indices {
            indegree[c] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(r) = stack.pop() {
            seen += 1;
            for k in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[k];
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    stack.push(c);
                }
            }
        }
        seen == n
    }
}

/// Iteration limits for [`spectral_radius`].
#[derive(Debug, Clone, Copy)]
pub struct PowerIterationOptions {
    pub rel_tol: f64,
    pub max_matvecs: usize,
    pub krylov_dim: usize,
    pub power_steps: usize,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        PowerIterationOptions {
            rel_tol: 1e-8,
            max_matvecs: 10_000,
            krylov_dim: 24,
            power_steps: 16,
        }
    }
}

/// Largest eigenvalue magnitude of a square matrix.
///
/// Power iteration from a fixed start vector drives the iterate into the
/// dominant invariant subspace; a short Arnoldi factorization from that
/// iterate then resolves the eigenvalues of that subspace, which copes with
/// dominant eigenvalues of equal modulus (conjugate pairs in real mode, short
/// cycles in very sparse draws) where the plain Rayleigh ratio oscillates.
/// Stops once consecutive estimates agree to `rel_tol` or the matvec budget
/// runs out.
pub fn spectral_radius(m: &CsrMatrix) -> Result<f64> {
    spectral_radius_with(m, PowerIterationOptions::default())
}

pub fn spectral_radius_with(m: &CsrMatrix, opts: PowerIterationOptions) -> Result<f64> {
    if m.rows != m.cols {
        return Err(PhriError::param(format!(
            "spectral radius needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let n = m.rows;
    if n == 0 {
        return Ok(0.0);
    }
    if m.nnz() == 0 {
        return Ok(0.0);
    }
    let mut x: Vec<Complex64> = (0..n)
        .map(|j| {
            let a = ((j * 7919) % 97) as f64 / 97.0;
            let b = ((j * 104_729) % 89) as f64 / 89.0;
            Complex64::new(1.0 + 0.5 * a, 0.25 - 0.5 * b)
        })
        .collect();
    normalize(&mut x);

    let kdim = opts.krylov_dim.clamp(1, n);
    let mut prev: Option<f64> = None;
    let mut used = 0usize;
    loop {
        let (h, breakdown) = arnoldi(m, &x, kdim);
        used += h.len();
        let est = hessenberg_eigenvalues(h)?
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if breakdown {
            return Ok(est);
        }
        if let Some(p) = prev {
            if (est - p).abs() <= opts.rel_tol * est.max(f64::MIN_POSITIVE) {
                return Ok(est);
            }
        }
        if used >= opts.max_matvecs {
            log::warn!(
                "spectral radius: budget of {} matvecs exhausted, last estimate {est}",
                opts.max_matvecs
            );
            return Ok(est);
        }
        prev = Some(est);
        for _ in 0..opts.power_steps {
            x = m.matvec(&x);
            if normalize(&mut x) == 0.0 {
                return Ok(0.0);
            }
        }
        used += opts.power_steps;
    }
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(x: &mut [Complex64]) -> f64 {
    let n = norm(x);
    if n > 0.0 {
        for z in x.iter_mut() {
            *z /= n;
        }
    }
    n
}

/// Arnoldi factorization with twice-repeated modified Gram-Schmidt.
/// Returns the square Hessenberg block and whether an invariant subspace was
/// hit before `k` steps.
fn arnoldi(m: &CsrMatrix, x0: &[Complex64], k: usize) -> (Vec<Vec<Complex64>>, bool) {
    let zero = Complex64::new(0.0, 0.0);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(k);
    let mut v0 = x0.to_vec();
    normalize(&mut v0);
    basis.push(v0);
    let mut h = vec![vec![zero; k]; k];
    for j in 0..k {
        let mut w = m.matvec(&basis[j]);
        let scale = norm(&w);
        for _pass in 0..2 {
            for (i, v) in basis.iter().enumerate() {
                let dot: Complex64 = v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                h[i][j] += dot;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= dot * vi;
                }
            }
        }
        let hn = norm(&w);
        if hn <= 1e-13 * scale.max(1e-300) || j + 1 == m.rows() {
            let dim = j + 1;
            let h = h.into_iter().take(dim).map(|row| row[..dim].to_vec()).collect();
            return (h, true);
        }
        if j + 1 < k {
            h[j + 1][j] = Complex64::new(hn, 0.0);
            for wi in w.iter_mut() {
                *wi /= hn;
            }
            basis.push(w);
        }
    }
    (h, false)
}

/// Eigenvalues of a small complex upper-Hessenberg matrix by single-shift QR
/// with Wilkinson shifts and deflation.
pub(crate) fn hessenberg_eigenvalues(mut h: Vec<Vec<Complex64>>) -> Result<Vec<Complex64>> {
    let n = h.len();
    let mut eig = Vec::with_capacity(n);
    let mut hi = n;
    let mut iter = 0usize;
    while hi > 0 {
        if hi == 1 {
            eig.push(h[0][0]);
            break;
        }
        // find start of the active unreduced block
        let mut lo = hi - 1;
        while lo > 0 {
            let s = h[lo - 1][lo - 1].norm() + h[lo][lo].norm();
            if h[lo][lo - 1].norm() <= f64::EPSILON * s.max(1e-300) {
                h[lo][lo - 1] = Complex64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi - 1 {
            eig.push(h[hi - 1][hi - 1]);
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        if iter > 200 * n {
            return Err(PhriError::numeric("Hessenberg QR failed to converge"));
        }
        let a = h[hi - 2][hi - 2];
        let b = h[hi - 2][hi - 1];
        let c = h[hi - 1][hi - 2];
        let d = h[hi - 1][hi - 1];
        let shift = if iter % 11 == 0 {
            // exceptional shift breaks rare stagnation cycles
            d + Complex64::new(0.75 * c.norm(), 0.0)
        } else {
            let tr_half = (a + d) * 0.5;
            let disc = ((a - d) * 0.5).powi(2) + b * c;
            let root = disc.sqrt();
            let l1 = tr_half + root;
            let l2 = tr_half - root;
            if (l1 - d).norm() <= (l2 - d).norm() {
                l1
            } else {
                l2
            }
        };
        for k in lo..hi {
            h[k][k] -= shift;
        }
        let mut rots = Vec::with_capacity(hi - lo - 1);
        for k in lo..hi - 1 {
            let x = h[k][k];
            let y = h[k + 1][k];
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            let (cs, sn) = if r == 0.0 {
                (1.0, Complex64::new(0.0, 0.0))
            } else if x.norm() == 0.0 {
                (0.0, y.conj() / y.norm())
            } else {
                (x.norm() / r, (x / x.norm()) * y.conj() / r)
            };
            for j in k..hi {
                let u = h[k][j];
                let v = h[k + 1][j];
                h[k][j] = u * cs + sn * v;
                h[k + 1][j] = -sn.conj() * u + v * cs;
            }
            rots.push((cs, sn));
        }
        for (idx, &(cs, sn)) in rots.iter().enumerate() {
            let k = lo + idx;
            let top = (k + 2).min(hi - 1);
            for row in h.iter_mut().take(top + 1).skip(lo) {
                let u = row[k];
                let v = row[k + 1];
                row[k] = u * cs + v * sn.conj();
                row[k + 1] = -u * sn + v * cs;
            }
        }
        for k in lo..hi {
            h[k][k] += shift;
        }
    }
    Ok(eig)
}
