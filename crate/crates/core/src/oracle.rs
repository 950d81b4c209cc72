//! Reference values computed without the closed-form limit model.
//!
//! For Pareto data the log-spacings of the order statistics are exactly
//! weighted iid standard exponentials, so the finite-sample mean and
//! variance of the HEWE statistic are finite sums. Covariances and the
//! `ρ → 0` bias limit are obtained by direct quadrature of their integral
//! forms. Nothing here calls into [`crate::model`].

use crate::error::{HeweError, Result};
use crate::process::guarded_floor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleTolerance {
    pub rel_tol: f64,
    /// Multiplier on Monte Carlo standard errors.
    pub mc_se_mult: f64,
}

impl OracleTolerance {
    pub fn new(rel_tol: f64, mc_se_mult: f64) -> Result<Self> {
        if !(rel_tol > 0.0) || !(mc_se_mult >= 2.0) {
            return Err(HeweError::InvalidConfig(format!(
                "oracle tolerance needs rel_tol > 0 and mc_se_mult >= 2, got {rel_tol}, {mc_se_mult}"
            )));
        }
        Ok(Self { rel_tol, mc_se_mult })
    }
}

impl Default for OracleTolerance {
    fn default() -> Self {
        Self { rel_tol: 1e-8, mc_se_mult: 3.0 }
    }
}

fn spacing_weights(k: usize, theta: f64, delta: f64) -> (usize, impl Iterator<Item = f64>) {
    let kf = k as f64;
    let d = guarded_floor(delta * kf);
    let m = guarded_floor(theta * kf);
    (m, (d + 1..=d + m).map(move |j| 1.0 - d as f64 / j as f64))
}

/// Exact `E[H_{k,n}(θ; δ)]` for iid Pareto(α) data.
pub fn pareto_hewe_mean_exact(alpha: f64, k: usize, theta: f64, delta: f64) -> Result<f64> {
    let (m, weights) = spacing_weights(k, theta, delta);
    if m == 0 {
        return Err(HeweError::DomainError("floor(theta*k) must be at least 1".into()));
    }
    let sum: f64 = weights.sum();
    Ok(sum / (alpha * m as f64))
}

/// Exact `Var[H_{k,n}(θ; δ)]` for iid Pareto(α) data.
pub fn pareto_hewe_var_exact(alpha: f64, k: usize, theta: f64, delta: f64) -> Result<f64> {
    let (m, weights) = spacing_weights(k, theta, delta);
    if m == 0 {
        return Err(HeweError::DomainError("floor(theta*k) must be at least 1".into()));
    }
    let sum: f64 = weights.map(|w| w * w).sum();
    let mf = m as f64;
    Ok(sum / (alpha * alpha * mf * mf))
}

/// `(1/(θ₁θ₂))·∫_δ^{δ+θ₁∧θ₂} (1 − δ/x)² dx` by adaptive Simpson quadrature.
pub fn cov_numeric(theta1: f64, theta2: f64, delta: f64) -> Result<f64> {
    if !(theta1 > 0.0 && theta2 > 0.0 && delta >= 0.0) {
        return Err(HeweError::DomainError("need theta > 0 and delta >= 0".into()));
    }
    let m = theta1.min(theta2);
    if delta == 0.0 {
        return Ok(m / (theta1 * theta2));
    }
    let integrand = |x: f64| {
        let r = 1.0 - delta / x;
        r * r
    };
    let integral = adaptive_simpson(integrand, delta, delta + m, 1e-10);
    Ok(integral / (theta1 * theta2))
}

/// `lim_{ρ→0} b_{δ,ρ}(θ)` from the first-order expansion of the bias
/// integrand: `∫₀¹ log((c+1)/(c+x)) dx` with `c = δ/θ`.
pub fn bias_b_limit_rho0(theta: f64, delta: f64) -> Result<f64> {
    if !(theta > 0.0 && delta >= 0.0) {
        return Err(HeweError::DomainError("need theta > 0 and delta >= 0".into()));
    }
    if delta == 0.0 {
        return Ok(1.0);
    }
    let c = delta / theta;
    Ok(adaptive_simpson(|x| ((c + 1.0) / (c + x)).ln(), 0.0, 1.0, 1e-13))
}

/// Adaptive Simpson with Richardson correction. The tolerance is absolute,
/// tightened to 1e-13 relative to the coarse estimate when that is smaller.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let tol = abs_tol.min(1e-13 * whole.abs()).max(f64::MIN_POSITIVE);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}
