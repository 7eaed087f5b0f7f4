//! HTTP API over the scenario solver and noise inference.
//!
//! | method | path          | body                                   |
//! |--------|---------------|----------------------------------------|
//! | GET    | /scenarios    |                                        |
//! | POST   | /solve        | [`SolveRequest`] JSON, or scenario TOML |
//! | POST   | /compare      | [`CompareRequest`]                     |
//! | POST   | /noise/infer  | [`InferRequest`]                       |
//!
//! Every handler is a pure function of the request and the data directory;
//! nothing is cached between requests.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use cryochain::data::DataStore;
use cryochain::error::{DataError, ScenarioError, ThermalError};
use cryochain::report::{
    compare, infer_chain, run_report, Comparison, NoiseOutcome, NoiseResult, ReportBundle,
};
use cryochain::scenario::{NoiseChainDocument, Overrides, Parameters, ScenarioDocument};
use cryochain::thermal::{SolverOptions, Stage};
use cryochain::units::{parse_quantity, Dimension};
use cryochain::Error;

pub const BODY_LIMIT: usize = 1 << 20;

#[derive(Clone)]
pub struct AppState {
    store: Arc<DataStore>,
}

impl AppState {
    pub fn new(store: DataStore) -> Self {
        AppState {
            store: Arc::new(store),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/scenarios", get(scenarios))
        .route("/solve", post(solve))
        .route("/compare", post(compare_handler))
        .route("/noise/infer", post(infer))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residual {
    pub stage: Stage,
    /// load − capacity, W
    pub residual: f64,
}

#[derive(Debug, Serialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ApiError {
    BadRequest {
        message: String,
    },
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    Validation {
        path: String,
        message: String,
    },
    NotFound {
        message: String,
    },
    Solver {
        message: String,
        residuals: Vec<Residual>,
    },
    Unreachable {
        message: String,
        floor_temperature: f64,
        floor_occupation: f64,
    },
    Internal {
        message: String,
    },
}

impl ApiError {
    fn bad(message: impl Into<String>) -> Self {
        ApiError::BadRequest {
            message: message.into(),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest { .. } | ApiError::Parse { .. } | ApiError::Validation { .. } => {
                StatusCode::BAD_REQUEST
            }
            ApiError::NotFound { .. } => StatusCode::NOT_FOUND,
            ApiError::Solver { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Unreachable { .. } => StatusCode::CONFLICT,
            ApiError::Internal { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

impl From<ScenarioError> for ApiError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Parse {
                line,
                column,
                message,
            } => ApiError::Parse {
                line,
                column,
                message,
            },
            ScenarioError::Validation { path, message } => ApiError::Validation { path, message },
            ScenarioError::Data(d) => Error::Data(d).into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Scenario(s) => s.into(),
            Error::Data(DataError::NotFound(_)) => ApiError::NotFound { message },
            Error::Solve { source, .. } => ApiError::Solver {
                message,
                residuals: match source {
                    ThermalError::NonConvergence { residuals, .. } => residuals
                        .into_iter()
                        .map(|(stage, residual)| Residual { stage, residual })
                        .collect(),
                    _ => Vec::new(),
                },
            },
            Error::Io { .. } => ApiError::Internal { message },
            _ => ApiError::BadRequest { message },
        }
    }
}

/// Exactly one of `scenario`, `document` and `inline` names the scenario.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRequest {
    /// Bundled or data-dir scenario name.
    pub scenario: Option<String>,
    /// Scenario document text.
    pub document: Option<String>,
    /// Scenario document as a JSON object.
    pub inline: Option<ScenarioDocument>,
    #[serde(default)]
    pub overrides: Overrides,
}

#[derive(Debug, Serialize)]
pub struct SolveResponse {
    pub scenario_hash: String,
    /// Parameters after overrides.
    pub parameters: Parameters,
    pub report: ReportBundle,
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn is_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_none_or(|v| v.starts_with("application/json"))
}

fn solve_request(store: &DataStore, req: SolveRequest) -> Result<SolveResponse, ApiError> {
    let mut doc = match (req.scenario, req.document, req.inline) {
        (Some(name), None, None) => store.scenario_document(&name)?,
        (None, Some(text), None) => ScenarioDocument::parse(&text)?,
        (None, None, Some(doc)) => doc,
        _ => {
            return Err(ApiError::bad(
                "give exactly one of `scenario`, `document` or `inline`",
            ))
        }
    };
    if !req.overrides.is_empty() {
        doc.apply(&req.overrides)?;
    }
    let scenario = doc.validate(store)?;
    let report = run_report(&scenario, store, &SolverOptions::default())?;
    Ok(SolveResponse {
        scenario_hash: report.metadata.scenario_hash.clone(),
        parameters: report.parameters.clone(),
        report,
    })
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal {
            message: e.to_string(),
        })?
}

/// JSON [`SolveRequest`], or the scenario document itself when the content
/// type is not JSON.
async fn solve(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<SolveResponse>, ApiError> {
    let req = if is_json(&headers) {
        parse_json::<SolveRequest>(&body)?
    } else {
        SolveRequest {
            document: Some(
                String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad("body is not UTF-8"))?,
            ),
            ..Default::default()
        }
    };
    let store = state.store.clone();
    blocking(move || solve_request(&store, req)).await.map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRequest {
    pub scenarios: Vec<SolveRequest>,
}

async fn compare_handler(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<Json<Comparison>, ApiError> {
    let req: CompareRequest = parse_json(&body)?;
    let store = state.store.clone();
    blocking(move || {
        let reports = req
            .scenarios
            .into_iter()
            .map(|r| solve_request(&store, r).map(|s| s.report))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(compare(&reports.iter().collect::<Vec<_>>())?)
    })
    .await
    .map(Json)
}

#[derive(Debug, Serialize)]
pub struct ScenarioSummary {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameters: Option<Parameters>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chains: Option<Vec<String>>,
    /// Why the file could not be loaded.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct ScenarioList {
    pub scenarios: Vec<ScenarioSummary>,
    pub overrides_schema: serde_json::Value,
}

async fn scenarios(State(state): State<AppState>) -> Result<Json<ScenarioList>, ApiError> {
    let store = state.store.clone();
    blocking(move || {
        let mut out = Vec::new();
        for name in store.scenario_names()? {
            out.push(match store.load_scenario(&name) {
                Ok(s) => ScenarioSummary {
                    description: Some(s.description.clone()),
                    capacity: Some(s.capacity.clone()),
                    scenario_hash: Some(s.hash()),
                    parameters: Some(s.parameters()),
                    chains: Some(s.noise_chains.iter().map(|c| c.name.clone()).collect()),
                    error: None,
                    name,
                },
                Err(e) => ScenarioSummary {
                    name,
                    description: None,
                    capacity: None,
                    scenario_hash: None,
                    parameters: None,
                    chains: None,
                    error: Some(e.to_string()),
                },
            });
        }
        Ok(ScenarioList {
            scenarios: out,
            overrides_schema: Overrides::schema(),
        })
    })
    .await
    .map(Json)
}

/// Either a chain of a scenario (`scenario` + `chain`) or an `inline` chain.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferRequest {
    pub scenario: Option<String>,
    pub chain: Option<String>,
    pub inline: Option<NoiseChainDocument>,
    /// Measured effective temperature at the device, e.g. `"100 mK"`.
    /// Defaults to the chain's own target.
    pub target: Option<String>,
    /// Replaces the chain frequency, e.g. `"6 GHz"`.
    pub frequency: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct InferResponse {
    pub result: NoiseResult,
    /// Defaulted values used by this chain.
    pub assumption_flags: Vec<String>,
}

fn infer_request(store: &DataStore, req: InferRequest) -> Result<InferResponse, ApiError> {
    let (named, assumptions) = match (&req.scenario, &req.chain, req.inline) {
        (Some(s), Some(c), None) => {
            let scenario = store.load_scenario(s)?;
            let named = scenario
                .chain(c)
                .cloned()
                .ok_or_else(|| ApiError::Validation {
                    path: "chain".into(),
                    message: format!("scenario `{s}` has no chain `{c}`"),
                })?;
            let own = format!("noise chain `{c}`");
            let flags: BTreeSet<String> = scenario
                .assumptions
                .iter()
                .filter(|a| a.contains(&own))
                .cloned()
                .collect();
            (named, flags)
        }
        (None, None, Some(doc)) => doc.validate("inline")?,
        _ => {
            return Err(ApiError::bad(
                "give either `scenario` and `chain`, or `inline`",
            ))
        }
    };
    let mut chain = named.chain;
    if let Some(f) = &req.frequency {
        chain.frequency = quantity("frequency", f, Dimension::Frequency)?;
    }
    let target = match (&req.target, named.target) {
        (Some(t), _) => quantity("target", t, Dimension::Temperature)?,
        (None, Some(t)) => t,
        (None, None) => {
            return Err(ApiError::Validation {
                path: "target".into(),
                message: "the chain has no target; give one".into(),
            })
        }
    };
    let result = infer_chain(&named.name, &chain, target);
    match &result.outcome {
        NoiseOutcome::Unreachable {
            floor_temperature,
            floor_occupation,
        } => Err(ApiError::Unreachable {
            message: format!("target {target} K is below the chain floor of {floor_temperature} K"),
            floor_temperature: *floor_temperature,
            floor_occupation: *floor_occupation,
        }),
        NoiseOutcome::Failed { message } => Err(ApiError::Validation {
            path: "target".into(),
            message: message.clone(),
        }),
        NoiseOutcome::Inferred(_) => Ok(InferResponse {
            result,
            assumption_flags: assumptions.into_iter().collect(),
        }),
    }
}

fn quantity(path: &str, text: &str, dimension: Dimension) -> Result<f64, ApiError> {
    let v = parse_quantity(text, dimension).map_err(|e| ApiError::Validation {
        path: path.into(),
        message: e.to_string(),
    })?;
    if !(v > 0.0) {
        return Err(ApiError::Validation {
            path: path.into(),
            message: format!("must be positive, got {text}"),
        });
    }
    Ok(v)
}

async fn infer(
    State(state): State<AppState>,
    body: Bytes,
) -> Result<Json<InferResponse>, ApiError> {
    let req: InferRequest = parse_json(&body)?;
    let store = state.store.clone();
    blocking(move || infer_request(&store, req)).await.map(Json)
}
