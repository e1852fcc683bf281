use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use gagne_core::corpus::{export_finetune, FinetuneFormat};
use gagne_core::gateway::Gateway;
use gagne_core::human_eval::{Dimension, Questionnaire, RatingRecord, RatingScope};
use gagne_core::{ReviewAction, ReviewState};
use parking_lot::RwLock;
use serde::Deserialize;
use serde_json::json;
use std::collections::{BTreeMap, HashMap};

use crate::error::ApiError;
use crate::jobs::{self, GenerateRequest, GenerationSettings, JobBoard};
use crate::store::Store;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<RwLock<Store>>,
    pub jobs: Arc<JobBoard>,
    pub gateway: Gateway,
    pub settings: GenerationSettings,
    token: Arc<str>,
}

impl AppState {
    pub fn new(store: Store, gateway: Gateway, settings: GenerationSettings, token: &str) -> Self {
        AppState {
            store: Arc::new(RwLock::new(store)),
            jobs: Arc::new(JobBoard::default()),
            gateway,
            settings,
            token: Arc::from(token),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/queue", get(queue))
        .route("/api/templates/{id}", get(template))
        .route("/api/templates/{id}/review", post(review))
        .route("/api/templates/{id}/ratings", post(rate).get(ratings))
        .route("/api/questionnaire", get(questionnaire))
        .route("/api/stats", get(stats))
        .route("/api/export", get(export))
        .route("/api/generate", post(generate))
        .route("/api/jobs/{id}", get(job))
        .route("/api/flush", post(flush))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

fn tokens_match(given: &str, expected: &str) -> bool {
    given.len() == expected.len() && given.bytes().zip(expected.bytes()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

async fn require_token(State(state): State<AppState>, headers: HeaderMap, request: Request, next: Next) -> Response {
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    match given {
        Some(token) if tokens_match(token, &state.token) => next.run(request).await,
        _ => ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid bearer token").into_response(),
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::bad_request("bad_request", e.body_text()))
}

#[derive(Debug, Default, Deserialize)]
struct QueueParams {
    state: Option<String>,
    page: Option<String>,
    page_size: Option<String>,
}

fn parse_page(raw: Option<&str>, default: usize, name: &str) -> Result<usize, ApiError> {
    match raw {
        None => Ok(default),
        Some(s) => s.trim().parse().map_err(|_| ApiError::bad_request("bad_page", format!("{name} must be a positive integer"))),
    }
}

async fn queue(State(state): State<AppState>, Query(params): Query<QueueParams>) -> Result<Response, ApiError> {
    let filter = match params.state.as_deref().map(str::trim) {
        None | Some("") | Some("all") => None,
        Some(s) => Some(s.parse::<ReviewState>()?),
    };
    let page = parse_page(params.page.as_deref(), 1, "page")?;
    let page_size = parse_page(params.page_size.as_deref(), 50, "page_size")?;
    let result = state.store.read().queue(filter, page, page_size)?;
    Ok(Json(result).into_response())
}

async fn template(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let store = state.store.read();
    let t = store.get(&id).ok_or_else(|| ApiError::not_found("template", &id))?;
    Ok(Json(t).into_response())
}

async fn review(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<ReviewAction>, JsonRejection>,
) -> Result<Response, ApiError> {
    let action = body(payload)?;
    let updated = state.store.write().review(&id, &action, Utc::now())?;
    Ok(Json(updated).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RatingBody {
    rater_id: String,
    scores: BTreeMap<Dimension, i64>,
    #[serde(default)]
    comment: Option<String>,
}

async fn rate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<RatingBody>, JsonRejection>,
) -> Result<Response, ApiError> {
    let b = body(payload)?;
    let record = RatingRecord {
        template_id: id.clone(),
        rater_id: b.rater_id.trim().to_string(),
        scores: b.scores,
        comment: b.comment.filter(|c| !c.trim().is_empty()),
        submitted_at: Utc::now(),
    };
    let rater_id = record.rater_id.clone();
    let ack = state.store.write().rate(record)?;
    let status = if ack.replaced { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(json!({"template_id": id, "rater_id": rater_id, "replaced": ack.replaced}))).into_response())
}

async fn ratings(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let store = state.store.read();
    if store.get(&id).is_none() {
        return Err(ApiError::not_found("template", &id));
    }
    let list: Vec<&RatingRecord> = store.ratings().iter().filter(|r| r.template_id == id).collect();
    let summary = store.rating_summary(&RatingScope::Template(id.clone())).ok();
    Ok(Json(json!({"ratings": list, "summary": summary})).into_response())
}

async fn questionnaire() -> Response {
    Json(Questionnaire::standard()).into_response()
}

async fn stats(State(state): State<AppState>) -> Response {
    Json(state.store.read().stats()).into_response()
}

async fn export(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Result<Response, ApiError> {
    let format: FinetuneFormat = params
        .get("format")
        .map(|f| f.parse())
        .transpose()
        .map_err(|e: String| ApiError::bad_request("bad_format", e))?
        .unwrap_or(FinetuneFormat::Alpaca);
    let bytes = export_finetune(state.store.read().records(), format)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], Bytes::from(bytes)).into_response())
}

async fn generate(
    State(state): State<AppState>,
    payload: Result<Json<GenerateRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = body(payload)?;
    let specs = jobs::prepare(&state.store.read(), &req)?;
    let seed = req.seed.unwrap_or_else(rand::random);
    let id = jobs::launch(state.jobs.clone(), state.store.clone(), state.gateway.clone(), state.settings, specs, seed);
    let status_url = format!("/api/jobs/{id}");
    Ok((StatusCode::ACCEPTED, Json(json!({"job_id": id, "status_url": status_url}))).into_response())
}

async fn job(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let status = state.jobs.get(&id).ok_or_else(|| ApiError::not_found("job", &id))?;
    Ok(Json(status).into_response())
}

async fn flush(State(state): State<AppState>) -> Result<Response, ApiError> {
    let mut store = state.store.write();
    store.compact()?;
    Ok(Json(json!({"flushed": true, "records": store.records().len()})).into_response())
}
