//! Deterministic pieces of the Gaussian limit of the HEWE process: the mean
//! curve `g_δ`, the bias curves `b_{δ,ρ}` and their T-transform `f_{δ,ρ}`,
//! the variance kernel `v`, covariances and the T-scale weights.

use serde::{Deserialize, Serialize};

use crate::error::{HeweError, Result};
use crate::process::{t_transform_values, ThetaGrid};

/// Below this δ the `δ = 0` formulas are used.
pub const DELTA_ZERO: f64 = 1e-8;
/// Below this |ρ| the bias curve is replaced by its `ρ → 0` limit.
pub const RHO_ZERO: f64 = 1e-6;
/// Below this argument `v` is summed from its power series.
const V_SERIES_MAX: f64 = 0.05;
const V_SERIES_TERMS: i32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitParams {
    pub alpha: f64,
    pub delta: f64,
    pub rho: f64,
    pub lambda: f64,
    pub k: usize,
}

impl LimitParams {
    pub fn new(alpha: f64, delta: f64, rho: f64, lambda: f64, k: usize) -> Result<Self> {
        let p = Self { alpha, delta, rho, lambda, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(HeweError::DomainError(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(HeweError::DomainError(format!("delta must be >= 0, got {}", self.delta)));
        }
        if !(self.rho <= 0.0) {
            return Err(HeweError::DomainError(format!("rho must be <= 0, got {}", self.rho)));
        }
        if !self.lambda.is_finite() {
            return Err(HeweError::DomainError("lambda must be finite".into()));
        }
        if self.k == 0 {
            return Err(HeweError::DomainError("k must be >= 1".into()));
        }
        Ok(())
    }

    /// Extreme value index `γ = 1/α`.
    pub fn gamma(&self) -> f64 {
        1.0 / self.alpha
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(HeweError::DomainError(format!("theta must be > 0, got {theta}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(HeweError::DomainError(format!("delta must be >= 0, got {delta}")));
    }
    Ok(())
}

/// Mean-curve shape `g_δ(θ) = 1 − (δ/θ)·log(θ/δ + 1)`, and 1 at `δ = 0`.
pub fn g(theta: f64, delta: f64) -> Result<f64> {
    check_theta(theta)?;
    check_delta(delta)?;
    Ok(g_unchecked(theta, delta))
}

fn g_unchecked(theta: f64, delta: f64) -> f64 {
    if delta < DELTA_ZERO {
        1.0
    } else {
        1.0 - delta / theta * (theta / delta).ln_1p()
    }
}

/// Bias curve `b_{δ,ρ}(θ)`.
pub fn bias_b(theta: f64, delta: f64, rho: f64) -> Result<f64> {
    check_theta(theta)?;
    check_delta(delta)?;
    if !(rho <= 0.0) {
        return Err(HeweError::DomainError(format!("rho must be <= 0, got {rho}")));
    }
    if delta < DELTA_ZERO {
        return Ok((-rho * theta.ln()).exp() / (1.0 - rho));
    }
    if rho.abs() < RHO_ZERO {
        return Ok(g_unchecked(theta, delta));
    }
    let x = theta / delta;
    let num = x * rho - (rho * x.ln_1p()).exp_m1();
    let den = x * (1.0 - rho) * rho;
    Ok(num / den * (-rho * (delta + theta).ln()).exp())
}

/// `fᵢ = bᵢ − (θᵢ₋₁/θᵢ)·bᵢ₋₁` on the grid.
pub fn bias_f(grid: &ThetaGrid, delta: f64, rho: f64) -> Result<Vec<f64>> {
    let b = grid
        .thetas()
        .iter()
        .map(|&t| bias_b(t, delta, rho))
        .collect::<Result<Vec<_>>>()?;
    Ok(t_transform_values(&b, grid))
}

/// Variance kernel `v(θ) = 1/θ − 2·log(θ+1)/θ² + 1/(θ(θ+1))`.
pub fn v_fn(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(v_unchecked(theta))
}

fn v_unchecked(theta: f64) -> f64 {
    if theta < V_SERIES_MAX {
        // Σ_{j≥1} (−1)^{j+1}·j/(j+2)·θʲ; the closed form cancels to O(θ)
        let mut sum = 0.0;
        let mut power = theta;
        for j in 1..=V_SERIES_TERMS {
            let jf = j as f64;
            let term = jf / (jf + 2.0) * power;
            sum += if j % 2 == 1 { term } else { -term };
            power *= theta;
        }
        sum
    } else {
        1.0 / theta - 2.0 * theta.ln_1p() / (theta * theta) + 1.0 / (theta * (theta + 1.0))
    }
}

/// Covariance of the limit of `H_{k,n}(θ₁; δ)` and `H_{k,n}(θ₂; δ)` at
/// sample scale, i.e. including the `1/(α²k)` factor.
pub fn limit_cov(theta1: f64, theta2: f64, delta: f64, alpha: f64, k: usize) -> Result<f64> {
    check_theta(theta1)?;
    check_theta(theta2)?;
    check_delta(delta)?;
    if !(alpha > 0.0) || k == 0 {
        return Err(HeweError::DomainError("alpha must be > 0 and k >= 1".into()));
    }
    let scale = 1.0 / (alpha * alpha * k as f64);
    Ok(scale * unit_cov(theta1, theta2, delta))
}

fn unit_cov(theta1: f64, theta2: f64, delta: f64) -> f64 {
    let (lo, hi) = (theta1.min(theta2), theta1.max(theta2));
    if delta < DELTA_ZERO {
        1.0 / hi
    } else {
        lo / (delta * hi) * v_unchecked(lo / delta)
    }
}

/// Covariance of the two-parameter field `G̃(θ, δ)` at unit scale.
pub fn field_cov(theta1: f64, delta1: f64, theta2: f64, delta2: f64) -> Result<f64> {
    check_theta(theta1)?;
    check_theta(theta2)?;
    check_delta(delta1)?;
    check_delta(delta2)?;
    if delta1 == delta2 {
        return Ok(unit_cov(theta1, theta2, delta1));
    }
    let lower = delta1.max(delta2);
    if lower < DELTA_ZERO {
        return Ok(1.0 / theta1.max(theta2));
    }
    let upper = (delta1 + theta1).min(delta2 + theta2);
    if upper <= lower {
        return Ok(0.0);
    }
    let span = upper - lower;
    let prod = delta1 * delta2;
    let integral = span - (delta1 + delta2) * (span / lower).ln_1p() + prod * span / (lower * upper);
    Ok(integral / (theta1 * theta2))
}

/// Inverse variances `wᵢ` of the T-transformed limit, up to `1/(α²k)`:
/// `Var(Tᵢ) = 1/(α²k·wᵢ)`.
pub fn t_variance_weights(grid: &ThetaGrid, delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    let thetas = grid.thetas();
    let mut w = Vec::with_capacity(thetas.len());
    for (i, &theta) in thetas.iter().enumerate() {
        let prev = if i == 0 { 0.0 } else { thetas[i - 1] };
        let wi = if delta < DELTA_ZERO {
            theta * theta / (theta - prev)
        } else {
            let mut den = v_unchecked(theta / delta);
            if i > 0 {
                let r = prev / theta;
                den -= r * r * v_unchecked(prev / delta);
            }
            delta / den
        };
        if !(wi > 0.0 && wi.is_finite()) {
            return Err(HeweError::DegenerateVariance { index: i });
        }
        w.push(wi);
    }
    Ok(w)
}

/// `g(θᵢ,δ)/α + (λ/√k)·b_{δ,ρ}(θᵢ)` on the H scale.
pub fn mean_curve(grid: &ThetaGrid, params: &LimitParams) -> Result<Vec<f64>> {
    params.validate()?;
    let amplitude = params.lambda / (params.k as f64).sqrt();
    grid.thetas()
        .iter()
        .map(|&t| Ok(g(t, params.delta)? / params.alpha + amplitude * bias_b(t, params.delta, params.rho)?))
        .collect()
}

/// `g` on the grid followed by the T-transform (the `Δg` of the likelihood).
pub fn mean_increments(grid: &ThetaGrid, delta: f64) -> Result<Vec<f64>> {
    let gv = grid.thetas().iter().map(|&t| g(t, delta)).collect::<Result<Vec<_>>>()?;
    Ok(t_transform_values(&gv, grid))
}

/// `ρⱼ = rho_min·(j/(n−1))²` for `j = 0..n`, from 0 down to `rho_min`;
/// denser near 0 where the bias curves change fastest.
pub fn quadratic_rho_nodes(rho_min: f64, n: usize) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|j| {
            let x = j as f64 / last;
            if j == 0 {
                0.0
            } else {
                rho_min * x * x
            }
        })
        .collect()
}

/// Bias curves on a fixed grid and δ, with the per-point logarithms
/// cached for repeated evaluation over ρ.
#[derive(Debug, Clone)]
pub struct BiasBasis {
    zero_delta: bool,
    ratios: Vec<f64>,
    x: Vec<f64>,
    log_shift: Vec<f64>,
    log1p_x: Vec<f64>,
    g: Vec<f64>,
    log_delta: f64,
}

const BASIS_EXPM1_BELOW: f64 = 0.05;

impl BiasBasis {
    pub fn new(grid: &ThetaGrid, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        let thetas = grid.thetas();
        let zero_delta = delta < DELTA_ZERO;
        let (x, log_shift, log1p_x) = if zero_delta {
            (vec![], thetas.iter().map(|t| t.ln()).collect(), vec![])
        } else {
            let x: Vec<f64> = thetas.iter().map(|t| t / delta).collect();
            (
                x.clone(),
                thetas.iter().map(|t| (delta + t).ln()).collect(),
                x.iter().map(|v| v.ln_1p()).collect(),
            )
        };
        Ok(Self {
            zero_delta,
            ratios: grid.ratios(),
            g: thetas.iter().map(|&t| g_unchecked(t, delta)).collect(),
            x,
            log_shift,
            log1p_x,
            log_delta: if zero_delta { 0.0 } else { delta.ln() },
        })
    }

    pub fn len(&self) -> usize {
        self.ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratios.is_empty()
    }

    /// `b_{δ,ρ}(θᵢ)` for the first `out.len()` grid points.
    pub fn b_into(&self, rho: f64, out: &mut [f64]) {
        let n = out.len();
        if self.zero_delta {
            let scale = 1.0 / (1.0 - rho);
            for (o, l) in out.iter_mut().zip(&self.log_shift[..n]) {
                *o = (-rho * l).exp() * scale;
            }
        } else if rho.abs() < RHO_ZERO {
            out.copy_from_slice(&self.g[..n]);
        } else {
            for i in 0..n {
                let x = self.x[i];
                let num = x * rho - (rho * self.log1p_x[i]).exp_m1();
                out[i] = num / (x * (1.0 - rho) * rho) * (-rho * self.log_shift[i]).exp();
            }
        }
    }

    /// `f_{δ,ρ}` for the first `out.len()` grid points.
    pub fn f_into(&self, rho: f64, out: &mut [f64]) {
        self.b_into(rho, out);
        for i in (1..out.len()).rev() {
            out[i] -= self.ratios[i] * out[i - 1];
        }
    }

    /// `f` at every node of [`quadratic_rho_nodes`]`(rho_min, n)` for the
    /// first `len` grid points, row `j` at `out[j*len..(j+1)*len]`.
    ///
    /// Uses `y^{a(j+1)²} = y^{aj²}·y^{a(2j+1)}` and, for δ > 0,
    /// `(θ/δ+1)^ρ·(δ+θ)^{−ρ} = δ^{−ρ}`, so each point costs one exponential
    /// for all nodes. The second identity loses accuracy when θ ≪ δ (about
    /// 1e-8 relative at θ/δ = 0.005); values are for screening only,
    /// refinement uses [`BiasBasis::f_into`].
    pub fn f_quadratic_nodes(&self, rho_min: f64, n: usize, len: usize, out: &mut [f64]) {
        let nodes = quadratic_rho_nodes(rho_min, n);
        let last = (n - 1) as f64;
        let a = -rho_min / (last * last);
        let mut p = vec![1.0; len];
        let mut q: Vec<f64> = self.log_shift[..len].iter().map(|l| (a * l).exp()).collect();
        let r: Vec<f64> = q.iter().map(|v| v * v).collect();
        for (j, &rho) in nodes.iter().enumerate() {
            if j > 0 {
                for i in 0..len {
                    p[i] *= q[i];
                    q[i] *= r[i];
                }
            }
            let row = &mut out[j * len..(j + 1) * len];
            if self.zero_delta {
                let scale = 1.0 / (1.0 - rho);
                for (o, pi) in row.iter_mut().zip(&p) {
                    *o = pi * scale;
                }
            } else if rho.abs() < BASIS_EXPM1_BELOW {
                self.b_into(rho, row);
            } else {
                let tail = (-rho * self.log_delta).exp();
                let scale = 1.0 / ((1.0 - rho) * rho);
                for i in 0..len {
                    let x = self.x[i];
                    row[i] = ((1.0 + x * rho) * p[i] - tail) * scale / x;
                }
            }
            for i in (1..len).rev() {
                row[i] -= self.ratios[i] * row[i - 1];
            }
        }
    }
}
