//! Scalar densities, divergences and their partial derivatives.
//!
//! Both the graph operations and the plain distribution types call these, so
//! each formula exists exactly once.

use statrs::function::gamma::{digamma, ln_gamma};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

#[inline]
pub fn normal_log_density(x: f64, mean: f64, scale: f64) -> f64 {
    let z = (x - mean) / scale;
    -HALF_LN_2PI - scale.ln() - 0.5 * z * z
}

/// `(∂/∂x, ∂/∂mean, ∂/∂scale)` of [`normal_log_density`].
#[inline]
pub fn normal_log_density_grad(x: f64, mean: f64, scale: f64) -> (f64, f64, f64) {
    let z = (x - mean) / scale;
    (-z / scale, z / scale, (z * z - 1.0) / scale)
}

pub fn student_t_log_density(x: f64, loc: f64, scale: f64, dof: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof)
        - 0.5 * (dof * std::f64::consts::PI).ln()
        - scale.ln()
        - 0.5 * (dof + 1.0) * (z * z / dof).ln_1p()
}

/// `[∂/∂x, ∂/∂loc, ∂/∂scale, ∂/∂dof]` of [`student_t_log_density`].
pub fn student_t_log_density_grad(x: f64, loc: f64, scale: f64, dof: f64) -> [f64; 4] {
    let z = (x - loc) / scale;
    let z2 = z * z;
    let denom = dof + z2;
    let dx = -(dof + 1.0) * z / (scale * denom);
    let dscale = -1.0 / scale + (dof + 1.0) * z2 / (scale * denom);
    let ddof = 0.5 * digamma(0.5 * (dof + 1.0))
        - 0.5 * digamma(0.5 * dof)
        - 0.5 / dof
        - 0.5 * (z2 / dof).ln_1p()
        + 0.5 * (dof + 1.0) * z2 / (dof * denom);
    [dx, -dx, dscale, ddof]
}

/// `KL(N(mq, sq²) ‖ N(mp, sp²))` for one dimension.
#[inline]
pub fn kl_normal(mq: f64, sq: f64, mp: f64, sp: f64) -> f64 {
    let d = mq - mp;
    (sp / sq).ln() + (sq * sq + d * d) / (2.0 * sp * sp) - 0.5
}

/// `[∂/∂mq, ∂/∂sq, ∂/∂mp, ∂/∂sp]` of [`kl_normal`].
#[inline]
pub fn kl_normal_grad(mq: f64, sq: f64, mp: f64, sp: f64) -> [f64; 4] {
    let d = mq - mp;
    let sp2 = sp * sp;
    [
        d / sp2,
        -1.0 / sq + sq / sp2,
        -d / sp2,
        1.0 / sp - (sq * sq + d * d) / (sp2 * sp),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6 * x.abs().max(1.0);
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn softplus_is_stable_and_inverts() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        for y in [1e-4, 0.3, 1.0, 10.0, 50.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn student_t_partials_match_differences() {
        let (x, l, s, v) = (0.7, -0.2, 1.3, 4.5);
        let g = student_t_log_density_grad(x, l, s, v);
        assert!((g[0] - fd(|t| student_t_log_density(t, l, s, v), x)).abs() < 1e-7);
        assert!((g[1] - fd(|t| student_t_log_density(x, t, s, v), l)).abs() < 1e-7);
        assert!((g[2] - fd(|t| student_t_log_density(x, l, t, v), s)).abs() < 1e-7);
        assert!((g[3] - fd(|t| student_t_log_density(x, l, s, t), v)).abs() < 1e-7);
    }

    #[test]
    fn kl_partials_match_differences() {
        let (a, b, c, d) = (0.3, 0.8, -0.5, 1.7);
        let g = kl_normal_grad(a, b, c, d);
        assert!((g[0] - fd(|t| kl_normal(t, b, c, d), a)).abs() < 1e-8);
        assert!((g[1] - fd(|t| kl_normal(a, t, c, d), b)).abs() < 1e-8);
        assert!((g[2] - fd(|t| kl_normal(a, b, t, d), c)).abs() < 1e-8);
        assert!((g[3] - fd(|t| kl_normal(a, b, c, t), d)).abs() < 1e-8);
    }
}
