use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use serde_json::json;

use diversify_core::frontier::{Frontier, FrontierPoint, StrategyTag};
use diversify_core::metrics::roi_upper_bound;
use diversify_core::scenario::{Category, ScenarioDocument, ScenarioSet};
use diversify_core::strategies::{
    solve_hhi_constrained, solve_hhi_penalty, ActiveReport, ConstrainedDivRequest, PenaltyRequest, StrategyError,
    Theta1, Zone,
};

use crate::state::{AppState, Dataset};

pub(crate) enum ApiError {
    NoDataset,
    Invalid(String),
    Internal(String),
}

impl From<StrategyError> for ApiError {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::Solver(_) => ApiError::Internal(e.to_string()),
            _ => ApiError::Invalid(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::NoDataset => (
                StatusCode::CONFLICT,
                "no dataset loaded: PUT a scenario document to /api/dataset or start the server with --scenarios"
                    .to_string(),
            ),
            ApiError::Invalid(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn loaded(state: &AppState) -> Result<Arc<Dataset>, ApiError> {
    state.dataset().ok_or(ApiError::NoDataset)
}

fn unit(name: &str, v: f64) -> Result<(), ApiError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ApiError::Invalid(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn beta(v: Option<f64>) -> Result<(), ApiError> {
    match v {
        Some(b) if !(b > 0.0 && b < 1.0) => Err(ApiError::Invalid(format!("beta must lie in (0, 1), got {b}"))),
        _ => Ok(()),
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?.map(Json)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSummary {
    pub label: String,
    pub technology: u32,
    pub country: u32,
    pub category: Category,
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Universe {
    pub n: usize,
    pub m: usize,
    pub budget: f64,
    pub assets: Vec<AssetSummary>,
    pub roi_upper_bound: f64,
    pub best_asset: usize,
}

fn summarize(ds: &Dataset) -> Universe {
    let set = &ds.set;
    let labels = set.labels();
    let assets = set
        .assets()
        .iter()
        .enumerate()
        .map(|(i, a)| AssetSummary {
            label: labels[i].clone(),
            technology: a.technology,
            country: a.country,
            category: a.category,
            mean_ratio: set.mean_ratio(i),
        })
        .collect();
    let (bound, best) = roi_upper_bound(set);
    Universe { n: set.n(), m: set.m(), budget: ds.constraints.budget, assets, roi_upper_bound: bound, best_asset: best }
}

pub(crate) async fn universe(State(state): State<Arc<AppState>>) -> ApiResult<Universe> {
    let ds = loaded(&state)?;
    Ok(Json(summarize(&ds)))
}

pub(crate) async fn load_dataset(
    State(state): State<Arc<AppState>>,
    Json(doc): Json<ScenarioDocument>,
) -> ApiResult<Universe> {
    let set = ScenarioSet::try_from(doc).map_err(|e| ApiError::Invalid(e.to_string()))?;
    let ds = state.load(set).map_err(|e| ApiError::Invalid(e.to_string()))?;
    Ok(Json(summarize(&ds)))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontierQuery {
    pub beta: Option<f64>,
}

pub(crate) async fn frontier(
    State(state): State<Arc<AppState>>,
    Query(q): Query<FrontierQuery>,
) -> ApiResult<Frontier> {
    beta(q.beta)?;
    let ds = loaded(&state)?;
    blocking(move || Ok(Frontier::new(state.baseline_frontier(&ds, state.risk(q.beta))?))).await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineBody {
    pub w: f64,
    #[serde(default)]
    pub beta: Option<f64>,
}

pub(crate) async fn solve_baseline(
    State(state): State<Arc<AppState>>,
    Json(body): Json<BaselineBody>,
) -> ApiResult<FrontierPoint> {
    unit("w", body.w)?;
    beta(body.beta)?;
    let ds = loaded(&state)?;
    blocking(move || {
        let r = state.baseline(&ds, body.w, state.risk(body.beta))?;
        Ok(FrontierPoint::from_result(body.w, StrategyTag::Baseline, &r))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyBody {
    pub w: f64,
    pub w_d: f64,
    #[serde(default)]
    pub beta: Option<f64>,
}

pub(crate) async fn solve_penalty(
    State(state): State<Arc<AppState>>,
    Json(body): Json<PenaltyBody>,
) -> ApiResult<FrontierPoint> {
    unit("w", body.w)?;
    unit("w_d", body.w_d)?;
    beta(body.beta)?;
    let ds = loaded(&state)?;
    blocking(move || {
        let risk = state.risk(body.beta);
        let stats = state.front_stats(&ds, risk)?;
        let request = PenaltyRequest {
            base: state.baseline_request(&ds, body.w, risk),
            w_d: body.w_d,
            theta1: Theta1::Stats(stats),
        };
        let r = solve_hhi_penalty(&request, &ds.set)?;
        Ok(FrontierPoint::from_result(body.w, StrategyTag::Penalty { w_d: body.w_d }, &r))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstrainedBody {
    pub w: f64,
    pub dp: f64,
    pub dr: f64,
    #[serde(default)]
    pub w_r: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedResponse {
    pub point: FrontierPoint,
    pub feasible: bool,
    pub from_baseline: bool,
    pub theta2: f64,
    pub report: ActiveReport,
    pub baseline: FrontierPoint,
}

fn zone_of(dp: f64, dr: f64) -> Option<Zone> {
    match (dp > 0.0, dr > 0.0, dp < 0.0, dr < 0.0) {
        (true, true, _, _) => Some(Zone::S1),
        (_, true, true, _) => Some(Zone::S2),
        (true, _, _, true) => Some(Zone::S3),
        _ => None,
    }
}

pub(crate) async fn solve_constrained(
    State(state): State<Arc<AppState>>,
    Json(body): Json<ConstrainedBody>,
) -> ApiResult<ConstrainedResponse> {
    unit("w", body.w)?;
    beta(body.beta)?;
    let ds = loaded(&state)?;
    blocking(move || {
        let risk = state.risk(body.beta);
        let b = state.baseline(&ds, body.w, risk)?;
        let request = ConstrainedDivRequest {
            w_r: body.w_r.unwrap_or(state.config.w_r),
            risk,
            solver: state.solver(),
            ..ConstrainedDivRequest::new(b.solution.x.clone(), b.metrics, body.dp, body.dr, ds.constraints.clone())
        };
        let r = solve_hhi_constrained(&request, &ds.set)?;
        Ok(ConstrainedResponse {
            point: FrontierPoint::from_constrained(body.w, body.dp, body.dr, zone_of(body.dp, body.dr), &r),
            feasible: r.feasible,
            from_baseline: r.from_baseline,
            theta2: r.theta2,
            report: r.report,
            baseline: FrontierPoint::from_result(body.w, StrategyTag::Baseline, &b),
        })
    })
    .await
}
