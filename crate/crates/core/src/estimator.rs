//! Approximate maximum likelihood for `(α, δ, ρ, λ)` from one sample.
//!
//! The observed HEWE curve is T-transformed once. For each δ on the grid the
//! weights, `Δg` and the bias directions at a fixed set of ρ nodes are
//! reduced to three numbers per (endpoint, node), from which the profile
//! log-likelihood of every α is a closed-form expression. The best cells
//! are then re-profiled over continuous ρ.

use std::collections::HashMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HeweError, Result};
use crate::model::{mean_increments, quadratic_rho_nodes, t_variance_weights, BiasBasis};
use crate::process::{guarded_floor, hewe_vector, t_transform, ThetaGrid};
use crate::sample::OrderedSample;

/// Evenly spaced values `min + i·step` for `i = 0..len()`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridRange {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        let r = Self { min, max, step };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.step.is_finite()) {
            return Err(HeweError::InvalidConfig("grid range must be finite".into()));
        }
        if !(self.step > 0.0) || self.max < self.min {
            return Err(HeweError::InvalidConfig(format!(
                "grid range needs step > 0 and max >= min, got {}:{}:{}",
                self.min, self.max, self.step
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        guarded_floor((self.max - self.min) / self.step) + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }
}

/// Parses `min:max:step`.
impl FromStr for GridRange {
    type Err = HeweError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(HeweError::InvalidConfig(format!("expected min:max:step, got {s:?}")));
        }
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| HeweError::InvalidConfig(format!("bad number {p:?} in range {s:?}")))
        };
        Self::new(num(parts[0])?, num(parts[1])?, num(parts[2])?)
    }
}

fn default_alpha_range() -> GridRange {
    GridRange { min: 0.01, max: 5.0, step: 0.01 }
}

fn default_delta_range() -> GridRange {
    GridRange { min: 0.0, max: 10.0, step: 0.001 }
}

fn default_rho_min() -> f64 {
    -20.0
}

fn default_theta1() -> usize {
    1
}

fn default_rho_nodes() -> usize {
    64
}

fn default_polish() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default = "default_alpha_range")]
    pub alpha_range: GridRange,
    #[serde(default = "default_delta_range")]
    pub delta_range: GridRange,
    #[serde(default = "default_rho_min")]
    pub rho_min: f64,
    /// `θₛ·k`, the number of top order statistics entering the fit. Sweeps
    /// take their endpoints separately and ignore this field.
    #[serde(default)]
    pub endpoint: usize,
    /// `θ₁·k`.
    #[serde(default = "default_theta1")]
    pub theta1_offset: usize,
    /// ρ values scanned before continuous refinement.
    #[serde(default = "default_rho_nodes")]
    pub rho_nodes: usize,
    /// Cells per endpoint re-profiled over continuous ρ.
    #[serde(default = "default_polish")]
    pub polish_candidates: usize,
}

impl SearchConfig {
    /// Defaults for real data: `θ₁·k = 1`.
    pub fn for_data(endpoint: usize) -> Self {
        Self {
            alpha_range: default_alpha_range(),
            delta_range: default_delta_range(),
            rho_min: default_rho_min(),
            endpoint,
            theta1_offset: 1,
            rho_nodes: default_rho_nodes(),
            polish_candidates: default_polish(),
        }
    }

    /// Defaults for simulated data: `θ₁·k = 5`.
    pub fn for_simulation(endpoint: usize) -> Self {
        Self { theta1_offset: 5, ..Self::for_data(endpoint) }
    }

    pub fn validate(&self) -> Result<()> {
        self.alpha_range.validate()?;
        self.delta_range.validate()?;
        if !(self.alpha_range.min > 0.0) {
            return Err(HeweError::InvalidConfig("alpha range must start above 0".into()));
        }
        if !(self.delta_range.min >= 0.0) {
            return Err(HeweError::InvalidConfig("delta range must start at or above 0".into()));
        }
        if !(self.rho_min < 0.0 && self.rho_min.is_finite()) {
            return Err(HeweError::InvalidConfig(format!("rho_min must be < 0, got {}", self.rho_min)));
        }
        if self.theta1_offset == 0 {
            return Err(HeweError::InvalidConfig("theta1_offset must be >= 1".into()));
        }
        if self.rho_nodes < 3 {
            return Err(HeweError::InvalidConfig("rho_nodes must be >= 3".into()));
        }
        if self.polish_candidates == 0 {
            return Err(HeweError::InvalidConfig("polish_candidates must be >= 1".into()));
        }
        Ok(())
    }

    fn check_endpoint(&self, endpoint: usize) -> Result<()> {
        if endpoint < self.theta1_offset + 1 {
            return Err(HeweError::InvalidConfig(format!(
                "endpoint {endpoint} leaves fewer than 2 grid points after theta1_offset {}",
                self.theta1_offset
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchDiagnostics {
    pub alpha_index: usize,
    pub delta_index: usize,
    pub alpha_at_lower: bool,
    pub alpha_at_upper: bool,
    pub delta_at_lower: bool,
    pub delta_at_upper: bool,
    pub rho_at_min: bool,
    /// λ could not be profiled (zero bias direction) and was set to 0.
    pub lambda_degenerate: bool,
    pub cells_total: usize,
    pub cells_screened: usize,
    pub cells_failed: usize,
    pub cells_polished: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub alpha_hat: f64,
    pub gamma_hat: f64,
    pub delta_hat: f64,
    /// `δ̂·k`, not rounded.
    pub missing_hat: f64,
    pub rho_hat: f64,
    pub lambda_hat: f64,
    pub loglik: f64,
    pub k: usize,
    pub theta1_offset: usize,
    pub endpoint: usize,
    pub diagnostics: SearchDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub endpoint: usize,
    pub result: Result<EstimateResult>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoProfile {
    pub rho: f64,
    pub lambda: f64,
    pub wss: f64,
}

fn check_lengths(t: &[f64], grid: &ThetaGrid, extra: Option<&[f64]>) -> Result<()> {
    if t.len() != grid.len() || extra.is_some_and(|w| w.len() != grid.len()) {
        return Err(HeweError::DomainError("vector lengths do not match the grid".into()));
    }
    Ok(())
}

fn check_alpha_delta(alpha: f64, delta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(delta >= 0.0 && delta.is_finite()) {
        return Err(HeweError::DomainError(format!("need alpha > 0 and delta >= 0, got {alpha}, {delta}")));
    }
    Ok(())
}

/// Closed-form λ̂ at fixed `(α, δ, ρ)`.
pub fn profile_lambda(
    t: &[f64],
    grid: &ThetaGrid,
    alpha: f64,
    delta: f64,
    rho: f64,
    w: &[f64],
) -> Result<f64> {
    check_lengths(t, grid, Some(w))?;
    check_alpha_delta(alpha, delta)?;
    let u = mean_increments(grid, delta)?;
    let f = crate::model::bias_f(grid, delta, rho)?;
    let (mut rf, mut ff) = (0.0, 0.0);
    for i in 0..t.len() {
        let r = t[i] - u[i] / alpha;
        rf += w[i] * r * f[i];
        ff += w[i] * f[i] * f[i];
    }
    if !(ff > 0.0) {
        return Err(HeweError::BiasDirectionDegenerate);
    }
    Ok((grid.k() as f64).sqrt() * rf / ff)
}

/// `s·log α + ½Σ log wᵢ − ½α²k·Σwᵢ(tᵢ − mᵢ)²`.
pub fn log_likelihood(
    t: &[f64],
    grid: &ThetaGrid,
    alpha: f64,
    delta: f64,
    rho: f64,
    lambda: f64,
) -> Result<f64> {
    check_lengths(t, grid, None)?;
    check_alpha_delta(alpha, delta)?;
    let w = t_variance_weights(grid, delta)?;
    let u = mean_increments(grid, delta)?;
    let f = crate::model::bias_f(grid, delta, rho)?;
    let k = grid.k() as f64;
    let amp = lambda / k.sqrt();
    let mut quad = 0.0;
    let mut logw = 0.0;
    for i in 0..t.len() {
        let r = t[i] - u[i] / alpha - amp * f[i];
        quad += w[i] * r * r;
        logw += w[i].ln();
    }
    Ok(t.len() as f64 * alpha.ln() + 0.5 * logw - 0.5 * alpha * alpha * k * quad)
}

/// Minimises the λ-profiled weighted sum of squares over `ρ ∈ [rho_min, 0]`.
pub fn profile_rho(
    t: &[f64],
    grid: &ThetaGrid,
    alpha: f64,
    delta: f64,
    config: &SearchConfig,
) -> Result<RhoProfile> {
    check_lengths(t, grid, None)?;
    check_alpha_delta(alpha, delta)?;
    config.validate()?;
    let ctx = CellContext::new(grid.clone(), t.to_vec(), delta)?;
    let nodes = rho_nodes(config.rho_min, config.rho_nodes);
    let (profile, _) = ctx.profile_rho(alpha, &nodes, config.rho_min)?;
    Ok(profile)
}

/// The ρ values scanned before refinement.
pub fn rho_nodes(rho_min: f64, n: usize) -> Vec<f64> {
    quadratic_rho_nodes(rho_min, n)
}

/// Everything the likelihood needs at one δ for one grid.
struct CellContext {
    grid: ThetaGrid,
    t: Vec<f64>,
    w: Vec<f64>,
    u: Vec<f64>,
    basis: BiasBasis,
    sum_log_w: f64,
}

impl CellContext {
    fn new(grid: ThetaGrid, t: Vec<f64>, delta: f64) -> Result<Self> {
        let w = t_variance_weights(&grid, delta)?;
        let u = mean_increments(&grid, delta)?;
        let basis = BiasBasis::new(&grid, delta)?;
        let sum_log_w = w.iter().map(|x| x.ln()).sum();
        Ok(Self { grid, t, w, u, basis, sum_log_w })
    }

    /// Profiled weighted sum of squares and λ̂ (None if the bias direction
    /// vanishes) at `(α, ρ)`.
    fn wss(&self, alpha: f64, rho: f64, f: &mut [f64]) -> (f64, Option<f64>) {
        self.basis.f_into(rho, f);
        let (mut rf, mut ff) = (0.0, 0.0);
        for i in 0..f.len() {
            let r = self.t[i] - self.u[i] / alpha;
            rf += self.w[i] * r * f[i];
            ff += self.w[i] * f[i] * f[i];
        }
        let c = if ff > 0.0 && ff.is_finite() { Some(rf / ff) } else { None };
        let coef = c.unwrap_or(0.0);
        let mut wss = 0.0;
        for i in 0..f.len() {
            let r = self.t[i] - self.u[i] / alpha - coef * f[i];
            wss += self.w[i] * r * r;
        }
        (wss, c.map(|c| c * (self.grid.k() as f64).sqrt()))
    }

    fn loglik(&self, alpha: f64, wss: f64) -> f64 {
        let k = self.grid.k() as f64;
        self.t.len() as f64 * alpha.ln() + 0.5 * self.sum_log_w - 0.5 * alpha * alpha * k * wss
    }

    /// Node scan, then Brent inside the bracket around the best node.
    /// Returns the profile and whether λ was degenerate there.
    fn profile_rho(&self, alpha: f64, nodes: &[f64], rho_min: f64) -> Result<(RhoProfile, bool)> {
        let mut f = vec![0.0; self.t.len()];
        let mut best_j = 0;
        let mut best = f64::INFINITY;
        for (j, &rho) in nodes.iter().enumerate() {
            let (v, _) = self.wss(alpha, rho, &mut f);
            if !v.is_finite() {
                return Err(HeweError::EstimationFailed(format!("non-finite objective at rho = {rho}")));
            }
            if v < best {
                best = v;
                best_j = j;
            }
        }
        let hi = if best_j == 0 { 0.0 } else { nodes[best_j - 1] };
        let lo = if best_j + 1 < nodes.len() { nodes[best_j + 1] } else { rho_min };
        let mut bad = None;
        let (x, fx) = brent_min(
            |rho| {
                let (v, _) = self.wss(alpha, rho, &mut f);
                if !v.is_finite() {
                    bad.get_or_insert(rho);
                    return f64::INFINITY;
                }
                v
            },
            lo,
            hi,
            1e-6,
            1e-10,
            200,
        );
        if let Some(rho) = bad {
            return Err(HeweError::EstimationFailed(format!("non-finite objective at rho = {rho}")));
        }
        let rho = if fx < best { x } else { nodes[best_j] };
        let (wss, lambda) = self.wss(alpha, rho, &mut f);
        Ok((RhoProfile { rho, lambda: lambda.unwrap_or(0.0), wss }, lambda.is_none()))
    }
}

/// Brent's derivative-free minimiser on `[a, b]` with tolerance
/// `rel·|x| + abs`.
fn brent_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel: f64, abs: f64, max_iter: usize) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = rel * x.abs() + abs;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    score: f64,
    ai: usize,
    di: usize,
}

impl Candidate {
    /// Higher score first, then smaller (α, δ).
    fn before(&self, other: &Candidate) -> bool {
        if self.score != other.score {
            return self.score > other.score;
        }
        (self.ai, self.di) < (other.ai, other.di)
    }
}

fn push_top(list: &mut Vec<Candidate>, c: Candidate, cap: usize) {
    if list.len() == cap && !c.before(list.last().unwrap()) {
        return;
    }
    let pos = list.iter().position(|x| c.before(x)).unwrap_or(list.len());
    list.insert(pos, c);
    list.truncate(cap);
}

#[derive(Debug, Clone)]
struct ScreenAcc {
    top: Vec<Vec<Candidate>>,
    screened: Vec<usize>,
    failed: Vec<usize>,
}

impl ScreenAcc {
    fn new(slots: usize) -> Self {
        Self { top: vec![Vec::new(); slots], screened: vec![0; slots], failed: vec![0; slots] }
    }

    fn merge(mut self, other: ScreenAcc, cap: usize) -> Self {
        for (slot, list) in other.top.into_iter().enumerate() {
            for c in list {
                push_top(&mut self.top[slot], c, cap);
            }
        }
        for i in 0..self.screened.len() {
            self.screened[i] += other.screened[i];
            self.failed[i] += other.failed[i];
        }
        self
    }
}

/// Per-δ quadratic coefficients: `α²·wss_min(ρⱼ) = Aα² − 2Bα + C`.
#[derive(Debug, Clone, Copy)]
struct Quad {
    a: f64,
    b: f64,
    c: f64,
}

struct Search<'a> {
    grid: &'a ThetaGrid,
    t: &'a [f64],
    k: f64,
    alphas: Vec<f64>,
    log_alphas: Vec<f64>,
    alpha_range: GridRange,
    nodes: Vec<f64>,
    rho_min: f64,
    /// Distinct prefix lengths, ascending.
    lens: Vec<usize>,
    cap: usize,
}

impl Search<'_> {
    fn delta_tables(&self, delta: f64) -> (Option<(Vec<f64>, Vec<f64>, BiasBasis)>, usize) {
        let full = self.grid.len();
        let (w, valid) = match t_variance_weights(self.grid, delta) {
            Ok(w) => (w, full),
            Err(HeweError::DegenerateVariance { index }) if index > 0 => {
                match self.grid.prefix(index).and_then(|g| t_variance_weights(&g, delta)) {
                    Ok(w) => (w, index),
                    Err(_) => return (None, 0),
                }
            }
            Err(_) => return (None, 0),
        };
        match (mean_increments(self.grid, delta), BiasBasis::new(self.grid, delta)) {
            (Ok(u), Ok(basis)) => (Some((w, u, basis)), valid),
            _ => (None, 0),
        }
    }

    fn screen_delta(&self, di: usize, delta: f64, acc: &mut ScreenAcc) {
        let n_alpha = self.alphas.len();
        let (tables, valid) = self.delta_tables(delta);
        let Some((w, u, basis)) = tables else {
            for slot in 0..self.lens.len() {
                acc.failed[slot] += n_alpha;
            }
            return;
        };
        let slots: Vec<usize> = (0..self.lens.len()).filter(|&s| self.lens[s] <= valid).collect();
        for slot in 0..self.lens.len() {
            if self.lens[slot] > valid {
                acc.failed[slot] += n_alpha;
            }
        }
        if slots.is_empty() {
            return;
        }
        let max_len = self.lens[*slots.last().unwrap()];
        let t = self.t;

        // ρ-free sums at each prefix length
        let mut fixed = Vec::with_capacity(slots.len());
        let (mut tt, mut tu, mut uu, mut lw) = (0.0, 0.0, 0.0, 0.0);
        let mut next = 0;
        for i in 0..max_len {
            tt += w[i] * t[i] * t[i];
            tu += w[i] * t[i] * u[i];
            uu += w[i] * u[i] * u[i];
            lw += w[i].ln();
            if i + 1 == self.lens[slots[next]] {
                fixed.push((tt, tu, uu, lw));
                next += 1;
            }
        }

        let nn = self.nodes.len();
        let mut quads: Vec<Option<Quad>> = vec![None; slots.len() * nn];
        let mut table = vec![0.0; nn * max_len];
        basis.f_quadratic_nodes(self.rho_min, nn, max_len, &mut table);
        for j in 0..nn {
            let f = &table[j * max_len..(j + 1) * max_len];
            let (mut tf, mut uf, mut ff) = (0.0, 0.0, 0.0);
            let mut next = 0;
            for i in 0..max_len {
                let wf = w[i] * f[i];
                tf += wf * t[i];
                uf += wf * u[i];
                ff += wf * f[i];
                if i + 1 == self.lens[slots[next]] {
                    let (tt, tu, uu, _) = fixed[next];
                    let q = Quad { a: tt - tf * tf / ff, b: tu - tf * uf / ff, c: uu - uf * uf / ff };
                    if ff > 0.0 && q.a > 0.0 && q.a.is_finite() && q.b.is_finite() && q.c.is_finite() {
                        quads[next * nn + j] = Some(q);
                    }
                    next += 1;
                }
            }
        }

        let amin = self.alpha_range.min;
        let astep = self.alpha_range.step;
        let k = self.k;
        for (pos, &slot) in slots.iter().enumerate() {
            let s = self.lens[slot] as f64;
            let half_lw = 0.5 * fixed[pos].3;
            let row: Vec<Quad> = quads[pos * nn..(pos + 1) * nn].iter().flatten().copied().collect();
            if row.is_empty() {
                acc.failed[slot] += n_alpha;
                continue;
            }
            let (mut lo, mut hi) = (usize::MAX, 0usize);
            for q in &row {
                let disc = (k * q.b).powi(2) + 4.0 * k * q.a * s;
                let star = (k * q.b + disc.sqrt()) / (2.0 * k * q.a);
                let idx = ((star - amin) / astep).round().clamp(0.0, (n_alpha - 1) as f64) as usize;
                lo = lo.min(idx);
                hi = hi.max(idx);
            }
            let lo = lo.saturating_sub(self.cap + 1);
            let hi = (hi + self.cap + 1).min(n_alpha - 1);
            for ai in lo..=hi {
                let a = self.alphas[ai];
                let qmin = row
                    .iter()
                    .map(|q| (q.a * a - 2.0 * q.b) * a + q.c)
                    .fold(f64::INFINITY, f64::min);
                let score = s * self.log_alphas[ai] + half_lw - 0.5 * k * qmin;
                acc.screened[slot] += 1;
                if score.is_finite() {
                    push_top(&mut acc.top[slot], Candidate { score, ai, di }, self.cap);
                } else {
                    acc.failed[slot] += 1;
                }
            }
        }
    }
}

/// Observed T-vector on the grid `theta1..=endpoint` (ranks over k).
fn prepare(sample: &OrderedSample, k: usize, theta1: usize, endpoint: usize) -> Result<(ThetaGrid, Vec<f64>)> {
    if endpoint + 1 > sample.len() {
        return Err(HeweError::InsufficientData { needed: endpoint + 1, available: sample.len() });
    }
    let grid = ThetaGrid::from_ranks(k, theta1, endpoint)?;
    let hv = hewe_vector(sample, &grid, 0.0)?;
    let t = t_transform(&hv);
    Ok((grid, t))
}

/// Fits the model at one endpoint.
pub fn estimate(sample: &OrderedSample, k: usize, config: &SearchConfig) -> Result<EstimateResult> {
    let mut entries = sweep_endpoints(sample, k, config, &[config.endpoint])?;
    entries.pop().expect("one entry per endpoint").result
}

/// Fits the model at each endpoint, sharing the HEWE curve and the per-δ
/// tables. Per-endpoint failures are recorded in the entry.
pub fn sweep_endpoints(
    sample: &OrderedSample,
    k: usize,
    config: &SearchConfig,
    endpoints: &[usize],
) -> Result<Vec<SweepEntry>> {
    config.validate()?;
    if k == 0 {
        return Err(HeweError::InvalidConfig("k must be >= 1".into()));
    }
    let theta1 = config.theta1_offset;
    let feasible = |e: usize| -> Result<()> {
        config.check_endpoint(e)?;
        if e + 1 > sample.len() {
            return Err(HeweError::InsufficientData { needed: e + 1, available: sample.len() });
        }
        Ok(())
    };
    let mut lens: Vec<usize> =
        endpoints.iter().filter(|&&e| feasible(e).is_ok()).map(|&e| e - theta1 + 1).collect();
    lens.sort_unstable();
    lens.dedup();

    let fitted: HashMap<usize, Result<EstimateResult>> = if lens.is_empty() {
        HashMap::new()
    } else {
        let max_endpoint = lens.last().unwrap() + theta1 - 1;
        let (grid, t) = prepare(sample, k, theta1, max_endpoint)?;
        fit_prefixes(&grid, &t, config, &lens)?
    };
    Ok(endpoints
        .iter()
        .map(|&e| SweepEntry {
            endpoint: e,
            result: feasible(e).and_then(|_| fitted[&(e - theta1 + 1)].clone()),
        })
        .collect())
}

fn fit_prefixes(
    grid: &ThetaGrid,
    t: &[f64],
    config: &SearchConfig,
    lens: &[usize],
) -> Result<HashMap<usize, Result<EstimateResult>>> {
    let alpha_range = config.alpha_range;
    let delta_range = config.delta_range;
    let alphas = alpha_range.values();
    let search = Search {
        grid,
        t,
        k: grid.k() as f64,
        log_alphas: alphas.iter().map(|a| a.ln()).collect(),
        alphas,
        alpha_range,
        nodes: rho_nodes(config.rho_min, config.rho_nodes),
        rho_min: config.rho_min,
        lens: lens.to_vec(),
        cap: config.polish_candidates,
    };
    let n_delta = delta_range.len();
    let slots = lens.len();
    let acc = (0..n_delta)
        .into_par_iter()
        .fold(
            || ScreenAcc::new(slots),
            |mut acc, di| {
                search.screen_delta(di, delta_range.value(di), &mut acc);
                acc
            },
        )
        .reduce(|| ScreenAcc::new(slots), |a, b| a.merge(b, search.cap));

    let mut contexts: HashMap<(usize, usize), Result<CellContext>> = HashMap::new();
    let mut out = HashMap::new();
    for (slot, &len) in lens.iter().enumerate() {
        let endpoint = len + config.theta1_offset - 1;
        let mut best: Option<(f64, Candidate, RhoProfile, bool)> = None;
        let mut polished = 0;
        for cand in &acc.top[slot] {
            let delta = delta_range.value(cand.di);
            let ctx = contexts.entry((len, cand.di)).or_insert_with(|| {
                grid.prefix(len).and_then(|g| CellContext::new(g, t[..len].to_vec(), delta))
            });
            let Ok(ctx) = ctx else { continue };
            let alpha = alpha_range.value(cand.ai);
            let Ok((profile, degenerate)) = ctx.profile_rho(alpha, &search.nodes, config.rho_min) else {
                continue;
            };
            polished += 1;
            let ll = ctx.loglik(alpha, profile.wss);
            if !ll.is_finite() {
                continue;
            }
            let c = Candidate { score: ll, ..*cand };
            if best.as_ref().is_none_or(|(_, b, _, _)| c.before(b)) {
                best = Some((ll, c, profile, degenerate));
            }
        }
        let result = match best {
            None => Err(HeweError::EstimationFailed(format!(
                "no (alpha, delta) cell could be fitted at endpoint {endpoint}"
            ))),
            Some((ll, c, profile, degenerate)) => {
                let alpha = alpha_range.value(c.ai);
                let delta = delta_range.value(c.di);
                let n_alpha = alpha_range.len();
                Ok(EstimateResult {
                    alpha_hat: alpha,
                    gamma_hat: 1.0 / alpha,
                    delta_hat: delta,
                    missing_hat: delta * grid.k() as f64,
                    rho_hat: profile.rho,
                    lambda_hat: profile.lambda,
                    loglik: ll,
                    k: grid.k(),
                    theta1_offset: config.theta1_offset,
                    endpoint,
                    diagnostics: SearchDiagnostics {
                        alpha_index: c.ai,
                        delta_index: c.di,
                        alpha_at_lower: c.ai == 0,
                        alpha_at_upper: c.ai + 1 == n_alpha,
                        delta_at_lower: c.di == 0,
                        delta_at_upper: c.di + 1 == n_delta,
                        rho_at_min: profile.rho - config.rho_min <= 1e-6 * config.rho_min.abs(),
                        lambda_degenerate: degenerate,
                        cells_total: n_alpha * n_delta,
                        cells_screened: acc.screened[slot],
                        cells_failed: acc.failed[slot],
                        cells_polished: polished,
                    },
                })
            }
        };
        out.insert(len, result);
    }
    Ok(out)
}

/// Node-screened profile log-likelihood on the full `(α, δ)` grid at the
/// configured endpoint; `NaN` marks cells that could not be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub alphas: Vec<f64>,
    pub deltas: Vec<f64>,
    /// `loglik[di][ai]`.
    pub loglik: Vec<Vec<f64>>,
}

impl Surface {
    pub fn max(&self) -> f64 {
        self.loglik.iter().flatten().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Exhaustive screened surface, with every ρ node at every cell. Slow; meant
/// for checking the search and for plotting small grids.
pub fn surface(sample: &OrderedSample, k: usize, config: &SearchConfig) -> Result<Surface> {
    config.validate()?;
    config.check_endpoint(config.endpoint)?;
    let (grid, t) = prepare(sample, k, config.theta1_offset, config.endpoint)?;
    let nodes = rho_nodes(config.rho_min, config.rho_nodes);
    let alphas = config.alpha_range.values();
    let deltas = config.delta_range.values();
    let loglik = deltas
        .par_iter()
        .map(|&delta| {
            let Ok(ctx) = CellContext::new(grid.clone(), t.clone(), delta) else {
                return vec![f64::NAN; alphas.len()];
            };
            let mut f = vec![0.0; t.len()];
            alphas
                .iter()
                .map(|&a| {
                    nodes
                        .iter()
                        .map(|&rho| ctx.loglik(a, ctx.wss(a, rho, &mut f).0))
                        .filter(|v| v.is_finite())
                        .fold(f64::NAN, f64::max)
                })
                .collect()
        })
        .collect();
    Ok(Surface { alphas, deltas, loglik })
}

/// Paired sweeps before and after removing the top `m` values. The after
/// sweep uses endpoints shifted left by `m`, so row `i` of both tables
/// refers to the same order statistics of the original sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WhatIf {
    pub remove_top: usize,
    pub k: usize,
    pub before: Vec<SweepEntry>,
    pub after: Vec<SweepEntry>,
}

pub fn what_if(
    sample: &OrderedSample,
    k: usize,
    config: &SearchConfig,
    endpoints: &[usize],
    m: usize,
) -> Result<WhatIf> {
    let reduced = sample.remove_top(m)?;
    let before = sweep_endpoints(sample, k, config, endpoints)?;
    let shifted: Vec<usize> = endpoints.iter().map(|&e| e.saturating_sub(m)).collect();
    let mut after = sweep_endpoints(&reduced, k, config, &shifted)?;
    for (entry, &e) in after.iter_mut().zip(endpoints) {
        if e < m {
            entry.result = Err(HeweError::InvalidConfig(format!("endpoint {e} is below the removal count {m}")));
        }
    }
    Ok(WhatIf { remove_top: m, k, before, after })
}
