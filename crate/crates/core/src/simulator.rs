//! Test distributions, sample paths of the Gaussian limit, and replicated
//! estimation experiments.

use rand::distr::{Distribution as _, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HeweError, Result};
use crate::estimator::{sweep_endpoints, GridRange, SearchConfig};
use crate::model::{bias_b, g, LimitParams};
use crate::process::{guarded_floor, ThetaGrid};
use crate::sample::OrderedSample;

/// Independent generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Pareto { alpha: f64 },
    Cauchy,
    StudentT { df: f64 },
    Exponential,
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Distribution::Pareto { alpha: p } | Distribution::StudentT { df: p } if !(p > 0.0 && p.is_finite()) => {
                Err(HeweError::InvalidConfig(format!("distribution parameter must be > 0, got {p}")))
            }
            _ => Ok(()),
        }
    }

    /// Tail index, `None` for the light-tailed exponential.
    pub fn true_alpha(&self) -> Option<f64> {
        match *self {
            Distribution::Pareto { alpha } => Some(alpha),
            Distribution::Cauchy => Some(1.0),
            Distribution::StudentT { df } => Some(df),
            Distribution::Exponential => None,
        }
    }

    /// Extreme value index; 0 for the exponential.
    pub fn true_gamma(&self) -> f64 {
        self.true_alpha().map_or(0.0, |a| 1.0 / a)
    }

    /// Distribution function at `x` of the (absolute) variable.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Distribution::Pareto { alpha } => {
                if x < 1.0 {
                    0.0
                } else {
                    1.0 - x.powf(-alpha)
                }
            }
            Distribution::Cauchy => 2.0 / std::f64::consts::PI * x.atan(),
            Distribution::Exponential => -(-x).exp_m1(),
            Distribution::StudentT { .. } => f64::NAN,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let chi = match *self {
            Distribution::StudentT { df } => Some(ChiSquared::new(df).expect("validated df")),
            _ => None,
        };
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x = match *self {
                Distribution::Pareto { alpha } => {
                    let u: f64 = rng.sample(Open01);
                    (-u.ln() / alpha).exp()
                }
                Distribution::Cauchy => {
                    let u: f64 = rng.sample(Open01);
                    (std::f64::consts::PI * (u - 0.5)).tan().abs()
                }
                Distribution::StudentT { df } => {
                    let z: f64 = rng.sample(StandardNormal);
                    let c: f64 = chi.as_ref().unwrap().sample(rng);
                    (z / (c / df).sqrt()).abs()
                }
                Distribution::Exponential => {
                    let u: f64 = rng.sample(Open01);
                    -u.ln()
                }
            };
            // exact zeros have no logarithm
            if x > 0.0 && x.is_finite() {
                out.push(x);
            }
        }
        out
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<OrderedSample> {
        self.validate()?;
        if n == 0 {
            return Err(HeweError::EmptyData);
        }
        OrderedSample::from_values(self.draw(n, &mut rng_for(seed, 0)))
    }
}

pub fn sample_pareto(alpha: f64, n: usize, seed: u64) -> Result<OrderedSample> {
    Distribution::Pareto { alpha }.sample(n, seed)
}

pub fn sample_cauchy(n: usize, seed: u64) -> Result<OrderedSample> {
    Distribution::Cauchy.sample(n, seed)
}

pub fn sample_student_t(df: f64, n: usize, seed: u64) -> Result<OrderedSample> {
    Distribution::StudentT { df }.sample(n, seed)
}

pub fn sample_exponential(n: usize, seed: u64) -> Result<OrderedSample> {
    Distribution::Exponential.sample(n, seed)
}

const BASE_MESH: usize = 1000;

/// One draw of
/// `g(θᵢ,δ)/α + (1/(α√k))·(1/θᵢ)∫_δ^{δ+θᵢ}(1−δ/x)dW(x) + bias_amplitude·b_{δ,ρ}(θᵢ)`.
///
/// The Brownian path is generated on a base mesh of 1000 points per unit
/// θ (plus the grid points) and refined by Brownian bridges with one
/// random stream per base interval, so meshes that are multiples of 1000
/// share the same coarse path. `params.lambda` is not used.
pub fn simulate_limit_path(
    grid: &ThetaGrid,
    params: &LimitParams,
    bias_amplitude: f64,
    mesh: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    limit_path(grid, params, bias_amplitude, mesh, seed, 1.0)
}

/// As [`simulate_limit_path`] with every Brownian increment multiplied by
/// `noise_scale`; a scale of 0 returns the mean curve.
pub fn simulate_limit_path_scaled(
    grid: &ThetaGrid,
    params: &LimitParams,
    bias_amplitude: f64,
    mesh: usize,
    seed: u64,
    noise_scale: f64,
) -> Result<Vec<f64>> {
    limit_path(grid, params, bias_amplitude, mesh, seed, noise_scale)
}

fn limit_path(
    grid: &ThetaGrid,
    params: &LimitParams,
    bias_amplitude: f64,
    mesh: usize,
    seed: u64,
    noise_scale: f64,
) -> Result<Vec<f64>> {
    params.validate()?;
    if mesh < BASE_MESH {
        return Err(HeweError::InvalidConfig(format!("mesh must be >= {BASE_MESH} points per unit theta")));
    }
    if !bias_amplitude.is_finite() || !noise_scale.is_finite() {
        return Err(HeweError::InvalidConfig("bias amplitude and noise scale must be finite".into()));
    }
    let delta = params.delta;
    let thetas = grid.thetas();
    let top = *thetas.last().unwrap();

    // base nodes in θ-offset units: j/1000 merged with the grid points
    let mut base: Vec<f64> = (0..=guarded_floor(top * BASE_MESH as f64))
        .map(|j| j as f64 / BASE_MESH as f64)
        .chain(thetas.iter().copied())
        .collect();
    base.sort_by(f64::total_cmp);
    base.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    if let Some(last) = base.last_mut() {
        *last = top;
    }

    let refine = (mesh as f64 / BASE_MESH as f64).round().max(1.0) as usize;
    let mut coarse = rng_for(seed, 0);
    let mut integral = 0.0;
    let mut out = Vec::with_capacity(thetas.len());
    let mut next = 0;
    let integrand = |x: f64| if delta > 0.0 { 1.0 - delta / x } else { 1.0 };
    for (iv, pair) in base.windows(2).enumerate() {
        let (a, b) = (pair[0], pair[1]);
        let len = b - a;
        let z: f64 = coarse.sample(StandardNormal);
        let total = noise_scale * len.sqrt() * z;
        if refine == 1 {
            integral += integrand(delta + a) * total;
        } else {
            let mut fine = rng_for(seed, iv as u64 + 1);
            let h = len / refine as f64;
            let mut w = 0.0;
            for j in 0..refine {
                let x = a + j as f64 * h;
                let next_w = if j + 1 == refine {
                    total
                } else {
                    let rest = len - j as f64 * h;
                    let zf: f64 = fine.sample(StandardNormal);
                    w + (total - w) * h / rest + noise_scale * (h * (rest - h) / rest).sqrt() * zf
                };
                integral += integrand(delta + x) * (next_w - w);
                w = next_w;
            }
        }
        while next < thetas.len() && (b - thetas[next]).abs() <= 1e-12 * b.max(1.0) {
            out.push(integral);
            next += 1;
        }
    }
    if out.len() != thetas.len() {
        return Err(HeweError::InvalidGrid("grid points could not be placed on the mesh".into()));
    }
    let alpha = params.alpha;
    let noise = 1.0 / (alpha * (params.k as f64).sqrt());
    thetas
        .iter()
        .zip(out)
        .map(|(&theta, i)| {
            let mean = g(theta, delta)? / alpha + bias_amplitude * bias_b(theta, delta, params.rho)?;
            Ok(mean + noise * i / theta)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub distribution: Distribution,
    pub n: usize,
    pub k: usize,
    pub delta_true: f64,
    pub replicates: usize,
    pub endpoints: Vec<usize>,
    pub seed: u64,
    pub search: SearchConfig,
}

/// Search settings in a config file; unset fields take the simulation
/// defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchOverrides {
    alpha_range: Option<GridRange>,
    delta_range: Option<GridRange>,
    rho_min: Option<f64>,
    theta1_offset: Option<usize>,
    rho_nodes: Option<usize>,
    polish_candidates: Option<usize>,
}

fn default_replicates() -> usize {
    200
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    distribution: Distribution,
    n: usize,
    k: usize,
    delta_true: f64,
    #[serde(default = "default_replicates")]
    replicates: usize,
    endpoints: Vec<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    search: SearchOverrides,
}

impl ExperimentConfig {
    /// Reads a TOML document such as
    ///
    /// ```toml
    /// n = 500
    /// k = 50
    /// delta_true = 1.0
    /// endpoints = [100, 140, 180]
    /// [distribution]
    /// kind = "pareto"
    /// alpha = 0.5
    /// [search]
    /// delta_range = { min = 0.0, max = 3.0, step = 0.001 }
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawExperiment = toml::from_str(text).map_err(|e| HeweError::InvalidConfig(e.to_string()))?;
        let mut search = SearchConfig::for_simulation(0);
        let o = raw.search;
        if let Some(v) = o.alpha_range {
            search.alpha_range = v;
        }
        if let Some(v) = o.delta_range {
            search.delta_range = v;
        }
        if let Some(v) = o.rho_min {
            search.rho_min = v;
        }
        if let Some(v) = o.theta1_offset {
            search.theta1_offset = v;
        }
        if let Some(v) = o.rho_nodes {
            search.rho_nodes = v;
        }
        if let Some(v) = o.polish_candidates {
            search.polish_candidates = v;
        }
        let config = Self {
            distribution: raw.distribution,
            n: raw.n,
            k: raw.k,
            delta_true: raw.delta_true,
            replicates: raw.replicates,
            endpoints: raw.endpoints,
            seed: raw.seed,
            search,
        };
        config.validate()?;
        Ok(config)
    }

    /// Count of top values removed from each simulated sample.
    pub fn removed(&self) -> usize {
        guarded_floor(self.delta_true * self.k as f64)
    }

    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        self.search.validate()?;
        if self.replicates == 0 || self.n == 0 || self.k == 0 {
            return Err(HeweError::InvalidConfig("replicates, n and k must be >= 1".into()));
        }
        if !(self.delta_true >= 0.0 && self.delta_true.is_finite()) {
            return Err(HeweError::InvalidConfig("delta_true must be >= 0".into()));
        }
        if self.removed() >= self.n {
            return Err(HeweError::InvalidConfig(format!(
                "removing {} values exhausts samples of size {}",
                self.removed(),
                self.n
            )));
        }
        if self.endpoints.is_empty() {
            return Err(HeweError::InvalidConfig("at least one endpoint is required".into()));
        }
        Ok(())
    }
}

/// Summary of one estimated quantity over the successful replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatSummary {
    pub truth: Option<f64>,
    pub mean: f64,
    pub median: f64,
    /// Population variance (divisor = count).
    pub variance: f64,
    pub bias: Option<f64>,
    /// `√(mean squared error)`.
    pub rmse: Option<f64>,
}

impl StatSummary {
    fn from_values(values: &[f64], truth: Option<f64>) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { truth, mean: f64::NAN, median: f64::NAN, variance: f64::NAN, bias: None, rmse: None };
        }
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 { sorted[mid] } else { 0.5 * (sorted[mid - 1] + sorted[mid]) };
        let rmse = truth.map(|t| (values.iter().map(|v| (v - t).powi(2)).sum::<f64>() / n).sqrt());
        Self { truth, mean, median, variance, bias: truth.map(|t| mean - t), rmse }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointSummary {
    pub endpoint: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub missing: StatSummary,
    pub alpha: StatSummary,
    pub gamma: StatSummary,
}

/// One replicate at one endpoint; estimates are NaN when `status` is not
/// `"ok"`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateEstimate {
    pub replicate: usize,
    pub endpoint: usize,
    pub status: String,
    pub alpha_hat: f64,
    pub gamma_hat: f64,
    pub delta_hat: f64,
    pub missing_hat: f64,
    pub rho_hat: f64,
    pub lambda_hat: f64,
    pub loglik: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub summaries: Vec<EndpointSummary>,
    pub replicates: Vec<ReplicateEstimate>,
}

/// Draws each replicate from its own stream, removes the top `⌊δk⌋`
/// values, sweeps the endpoints and aggregates per endpoint.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let removed = config.removed();
    let per_rep: Vec<Vec<ReplicateEstimate>> = (0..config.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rng_for(config.seed, rep as u64);
            let values = config.distribution.draw(config.n, &mut rng);
            let entries = OrderedSample::from_values(values)
                .and_then(|s| s.remove_top(removed))
                .and_then(|s| sweep_endpoints(&s, config.k, &config.search, &config.endpoints));
            config
                .endpoints
                .iter()
                .enumerate()
                .map(|(i, &endpoint)| {
                    let outcome = match &entries {
                        Ok(list) => list[i].result.clone(),
                        Err(e) => Err(e.clone()),
                    };
                    match outcome {
                        Ok(r) => ReplicateEstimate {
                            replicate: rep,
                            endpoint,
                            status: "ok".into(),
                            alpha_hat: r.alpha_hat,
                            gamma_hat: r.gamma_hat,
                            delta_hat: r.delta_hat,
                            missing_hat: r.missing_hat,
                            rho_hat: r.rho_hat,
                            lambda_hat: r.lambda_hat,
                            loglik: r.loglik,
                        },
                        Err(e) => ReplicateEstimate {
                            replicate: rep,
                            endpoint,
                            status: e.code().into(),
                            alpha_hat: f64::NAN,
                            gamma_hat: f64::NAN,
                            delta_hat: f64::NAN,
                            missing_hat: f64::NAN,
                            rho_hat: f64::NAN,
                            lambda_hat: f64::NAN,
                            loglik: f64::NAN,
                        },
                    }
                })
                .collect()
        })
        .collect();
    let replicates: Vec<ReplicateEstimate> = per_rep.into_iter().flatten().collect();

    let truth_missing = config.delta_true * config.k as f64;
    let summaries = config
        .endpoints
        .iter()
        .enumerate()
        .map(|(i, &endpoint)| {
            let ok: Vec<&ReplicateEstimate> = replicates
                .iter()
                .skip(i)
                .step_by(config.endpoints.len())
                .filter(|r| r.status == "ok")
                .collect();
            let pick = |f: fn(&ReplicateEstimate) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<_>>();
            EndpointSummary {
                endpoint,
                succeeded: ok.len(),
                failed: config.replicates - ok.len(),
                missing: StatSummary::from_values(&pick(|r| r.missing_hat), Some(truth_missing)),
                alpha: StatSummary::from_values(&pick(|r| r.alpha_hat), config.distribution.true_alpha()),
                gamma: StatSummary::from_values(&pick(|r| r.gamma_hat), Some(config.distribution.true_gamma())),
            }
        })
        .collect();
    Ok(ExperimentReport { config: config.clone(), summaries, replicates })
}
