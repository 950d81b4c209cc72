//! HTTP API over the estimator. Every GET/POST answers JSON by default and
//! CSV with `?format=csv`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use hewe::estimator::{estimate, what_if, SearchConfig};
use hewe::model::{mean_curve, LimitParams};
use hewe::process::{guarded_floor, hewe_vector, hill_curve, ThetaGrid};
use hewe::report::{self, WhatIfReport};
use hewe::sample::{load_sample, ColumnSelector};
use hewe::simulator::simulate_limit_path;
use hewe::HeweError;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::store::{session_id, Session, SessionStore};

pub struct AppState {
    pub store: SessionStore,
}

impl AppState {
    pub fn new(capacity: usize) -> Arc<Self> {
        Arc::new(Self { store: SessionStore::new(capacity) })
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/samples", post(upload))
        .route("/samples/{id}/hill", get(hill))
        .route("/samples/{id}/hewe", get(hewe_curve))
        .route("/samples/{id}/estimate", post(estimate_handler))
        .route("/samples/{id}/whatif", post(whatif_handler))
        .route("/meancurve", get(meancurve))
        .route("/gp-paths", get(gp_paths))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn not_found(id: &str) -> Self {
        Self { status: StatusCode::NOT_FOUND, code: "NotFound".into(), message: format!("unknown sample id {id}") }
    }
}

impl From<HeweError> for ApiError {
    fn from(e: HeweError) -> Self {
        Self { status: StatusCode::BAD_REQUEST, code: e.code().into(), message: e.to_string() }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::to_string(&ErrorBody { error: &self.code, message: &self.message })
            .expect("plain strings serialize");
        (self.status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

fn json_response(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn csv_response(body: String) -> Response {
    ([(header::CONTENT_TYPE, "text/csv")], body).into_response()
}

fn respond<T: Serialize>(format: Format, value: &T, csv: impl FnOnce() -> hewe::Result<String>) -> ApiResult {
    Ok(match format {
        Format::Json => json_response(report::to_json(value)?),
        Format::Csv => csv_response(csv()?),
    })
}

fn session(state: &AppState, id: &str) -> Result<Arc<Session>, ApiError> {
    state.store.get(id).ok_or_else(|| ApiError::not_found(id))
}

fn bad_query(msg: impl Into<String>) -> ApiError {
    HeweError::InvalidConfig(msg.into()).into()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> hewe::Result<T> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::from(HeweError::EstimationFailed(e.to_string())))?
        .map_err(ApiError::from)
}

#[derive(Debug, Deserialize)]
struct UploadQuery {
    column: Option<String>,
    #[serde(default)]
    format: Format,
}

#[derive(Debug, Serialize)]
pub struct SampleSummary {
    pub id: String,
    pub n: usize,
    pub n_original: usize,
    pub removed_top: usize,
    pub min: f64,
    pub max: f64,
    pub non_numeric_rows: Vec<usize>,
    pub header: Option<Vec<String>>,
}

async fn upload(State(state): State<Arc<AppState>>, Query(q): Query<UploadQuery>, body: Bytes) -> ApiResult {
    let column_text = q.column.unwrap_or_else(|| "0".into());
    let Ok(selector) = column_text.parse::<ColumnSelector>();
    let id = session_id(&column_text, &body);
    let ingested = load_sample(&body[..], &selector)?;
    let s = state.store.insert(id.clone(), Session::new(ingested.sample, ingested.header, ingested.non_numeric_rows));
    let summary = SampleSummary {
        id,
        n: s.sample.len(),
        n_original: s.sample.n_original(),
        removed_top: s.sample.removed_top(),
        min: s.sample.min(),
        max: s.sample.max(),
        non_numeric_rows: s.non_numeric_rows.clone(),
        header: s.header.clone(),
    };
    respond(q.format, &summary, || {
        Ok(format!(
            "id,n,n_original,min,max\n{},{},{},{},{}\n",
            summary.id,
            summary.n,
            summary.n_original,
            report::fmt_g17(summary.min),
            report::fmt_g17(summary.max)
        ))
    })
}

#[derive(Debug, Deserialize)]
struct HillQuery {
    kmax: usize,
    #[serde(default)]
    format: Format,
}

async fn hill(State(state): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<HillQuery>) -> ApiResult {
    let s = session(&state, &id)?;
    let curve = hill_curve(&s.sample, q.kmax)?;
    respond(q.format, &curve, || {
        let rows: Vec<(f64, f64)> = curve.iter().map(|&(k, h)| (k as f64, h)).collect();
        report::pairs_csv("k", "hill", &rows)
    })
}

/// `thetas` is a comma-separated list of `θ·k` values.
fn parse_counts(text: &str) -> Result<Vec<f64>, ApiError> {
    text.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad_query(format!("bad theta count {p:?}"))))
        .collect()
}

fn grid_from_query(k: usize, thetas: Option<&str>, from: usize, to: usize) -> Result<ThetaGrid, ApiError> {
    if k == 0 {
        return Err(bad_query("k must be >= 1"));
    }
    Ok(match thetas {
        Some(text) => {
            let kf = k as f64;
            ThetaGrid::new(k, parse_counts(text)?.into_iter().map(|c| c / kf).collect())?
        }
        None => ThetaGrid::from_ranks(k, from, to)?,
    })
}

#[derive(Debug, Deserialize)]
struct HeweQuery {
    k: usize,
    #[serde(default)]
    delta: f64,
    /// First `θ·k` when `thetas` is absent.
    theta1: Option<usize>,
    /// Last `θ·k` when `thetas` is absent; defaults to the largest the
    /// sample supports.
    to: Option<usize>,
    thetas: Option<String>,
    #[serde(default)]
    format: Format,
}

async fn hewe_curve(State(state): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<HeweQuery>) -> ApiResult {
    let s = session(&state, &id)?;
    if !(q.delta >= 0.0 && q.delta.is_finite()) {
        return Err(bad_query("delta must be >= 0"));
    }
    let skip = guarded_floor(q.delta * q.k as f64);
    let last = q.to.unwrap_or_else(|| s.sample.len().saturating_sub(skip + 1));
    let grid = grid_from_query(q.k, q.thetas.as_deref(), q.theta1.unwrap_or(1), last)?;
    let hv = hewe_vector(&s.sample, &grid, q.delta)?;
    let rows: Vec<(f64, f64)> = grid.scaled().into_iter().zip(hv.h).collect();
    respond(q.format, &rows, || report::pairs_csv("theta_k", "hewe", &rows))
}

#[derive(Debug, Deserialize)]
struct KQuery {
    k: usize,
    #[serde(default)]
    format: Format,
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| bad_query(format!("invalid request body: {e}")))
}

async fn estimate_handler(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<KQuery>,
    body: Bytes,
) -> ApiResult {
    let s = session(&state, &id)?;
    let config: SearchConfig = parse_body(&body)?;
    let key = format!("{}|{}", q.k, serde_json::to_string(&config).expect("config serializes"));
    let json = match s.cached(&key) {
        Some(json) => json,
        None => {
            let sample = s.sample.clone();
            let k = q.k;
            let json = blocking(move || estimate(&sample, k, &config).and_then(|r| report::to_json(&r))).await?;
            s.cache(key, json.clone());
            json
        }
    };
    Ok(match q.format {
        Format::Json => json_response(json),
        Format::Csv => {
            let r: hewe::EstimateResult = serde_json::from_str(&json).expect("cached result parses");
            csv_response(report::estimate_csv(&r)?)
        }
    })
}

fn default_search() -> SearchConfig {
    SearchConfig::for_data(0)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub remove_top: usize,
    pub k: usize,
    pub endpoints: Vec<usize>,
    #[serde(default = "default_search")]
    pub search: SearchConfig,
}

async fn whatif_handler(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<FormatQuery>,
    body: Bytes,
) -> ApiResult {
    let s = session(&state, &id)?;
    let req: WhatIfRequest = parse_body(&body)?;
    let sample = s.sample.clone();
    let report = blocking(move || {
        what_if(&sample, req.k, &req.search, &req.endpoints, req.remove_top).map(|w| WhatIfReport::from(&w))
    })
    .await?;
    respond(q.format, &report, || report::what_if_csv(&report))
}

#[derive(Debug, Deserialize)]
struct FormatQuery {
    #[serde(default)]
    format: Format,
}

#[derive(Debug, Deserialize)]
struct CurveQuery {
    alpha: f64,
    #[serde(default)]
    delta: f64,
    #[serde(default)]
    rho: f64,
    #[serde(default)]
    lambda: f64,
    k: usize,
    thetas: Option<String>,
    from: Option<usize>,
    to: Option<usize>,
    #[serde(default)]
    format: Format,
}

async fn meancurve(Query(q): Query<CurveQuery>) -> ApiResult {
    let params = LimitParams::new(q.alpha, q.delta, q.rho, q.lambda, q.k)?;
    let grid = grid_from_query(q.k, q.thetas.as_deref(), q.from.unwrap_or(1), q.to.unwrap_or(5 * q.k))?;
    let values = mean_curve(&grid, &params)?;
    let rows: Vec<(f64, f64)> = grid.scaled().into_iter().zip(values).collect();
    respond(q.format, &rows, || report::pairs_csv("theta_k", "mean", &rows))
}

const MAX_PATHS: usize = 1000;

fn default_count() -> usize {
    50
}

fn default_alpha() -> f64 {
    0.5
}

fn default_k() -> usize {
    100
}

fn default_mesh() -> usize {
    1000
}

#[derive(Debug, Deserialize)]
struct PathsQuery {
    #[serde(default = "default_count")]
    count: usize,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default)]
    delta: f64,
    #[serde(default)]
    rho: f64,
    #[serde(default = "default_k")]
    k: usize,
    /// Coefficient on the bias curve.
    #[serde(default)]
    bias: f64,
    from: Option<usize>,
    to: Option<usize>,
    #[serde(default = "default_mesh")]
    mesh: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    format: Format,
}

#[derive(Debug, Serialize)]
struct PathsBody {
    theta_k: Vec<f64>,
    paths: Vec<Vec<f64>>,
}

async fn gp_paths(Query(q): Query<PathsQuery>) -> ApiResult {
    if q.count == 0 || q.count > MAX_PATHS {
        return Err(bad_query(format!("count must be in 1..={MAX_PATHS}")));
    }
    let params = LimitParams::new(q.alpha, q.delta, q.rho, 0.0, q.k)?;
    let grid = grid_from_query(q.k, None, q.from.unwrap_or(1), q.to.unwrap_or(5 * q.k))?;
    let theta_k = grid.scaled();
    let paths = blocking(move || {
        (0..q.count)
            .map(|i| simulate_limit_path(&grid, &params, q.bias, q.mesh, q.seed.wrapping_add(i as u64)))
            .collect::<hewe::Result<Vec<_>>>()
    })
    .await?;
    let body = PathsBody { theta_k, paths };
    respond(q.format, &body, || {
        let mut out = String::from("theta_k");
        for i in 0..body.paths.len() {
            out.push_str(&format!(",path_{i}"));
        }
        out.push('\n');
        for (row, x) in body.theta_k.iter().enumerate() {
            out.push_str(&report::fmt_g17(*x));
            for p in &body.paths {
                out.push(',');
                out.push_str(&report::fmt_g17(p[row]));
            }
            out.push('\n');
        }
        Ok(out)
    })
}
