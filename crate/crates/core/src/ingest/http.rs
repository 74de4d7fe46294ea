//! HTTP+JSON API over the store and query engine. Timestamps are ISO-8601
//! UTC strings throughout.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use super::IngestCore;
use crate::clinical::{Concept, SynonymTable};
use crate::query::{patient_status, Lang, PatientStatus, QueryEngine, QueryError};
use crate::store::Sample;
use crate::time::{self, parse_iso8601, EpochSeconds, HOUR};

#[derive(Clone)]
struct ApiState {
    engine: QueryEngine,
    ingest: Option<Arc<IngestCore>>,
}

struct ApiError(StatusCode, String, &'static str);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1, "kind": self.2 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into(), "bad_request")
}

fn not_found(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, msg.into(), "not_found")
}

/// Routes: `GET /health`, `GET /patients`, `GET /patients/{id}/latest`,
/// `GET /patients/{id}/series`, `POST /query`, and static files under `/ui`
/// when `ui_dir` is given.
pub fn router(
    engine: QueryEngine,
    ingest: Option<Arc<IngestCore>>,
    ui_dir: Option<PathBuf>,
) -> Router {
    let mut app = Router::new()
        .route("/health", get(health))
        .route("/patients", get(patients))
        .route("/patients/{id}/latest", get(latest))
        .route("/patients/{id}/series", get(series))
        .route("/query", post(query))
        .with_state(ApiState { engine, ingest });
    if let Some(dir) = ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app
}

async fn health(State(st): State<ApiState>) -> Json<serde_json::Value> {
    let store = st.engine.store();
    let (sessions, stats) = match &st.ingest {
        Some(core) => (
            serde_json::to_value(core.sessions()).unwrap_or_default(),
            serde_json::to_value(core.stats()).unwrap_or_default(),
        ),
        None => (json!([]), json!(null)),
    };
    Json(json!({
        "status": "ok",
        "patients": store.patients().len(),
        "samples": store.total_samples(),
        "latest_time": store.latest_time().map(time::to_iso8601),
        "adapter": st.engine.adapter_name(),
        "agents": sessions,
        "ingest": stats,
    }))
}

#[derive(Serialize)]
struct PatientSummary {
    patient_id: String,
    bed_id: String,
    #[serde(with = "time::iso_opt")]
    last_time: Option<EpochSeconds>,
    status: PatientStatus,
    age: Option<u32>,
    gender: Option<String>,
    diagnosis: Option<String>,
}

async fn patients(State(st): State<ApiState>) -> Json<Vec<PatientSummary>> {
    let store = st.engine.store();
    let now = store.latest_time().unwrap_or(0);
    Json(
        store
            .patients()
            .into_iter()
            .map(|p| {
                let ctx = st.engine.contexts().get(&p.patient_id);
                PatientSummary {
                    status: patient_status(store, &p.patient_id, now),
                    age: ctx.and_then(|c| c.age),
                    gender: ctx.and_then(|c| c.gender.clone()),
                    diagnosis: ctx.and_then(|c| c.diagnosis.clone()),
                    patient_id: p.patient_id,
                    bed_id: p.bed_id,
                    last_time: p.last_time,
                }
            })
            .collect(),
    )
}

#[derive(Serialize)]
struct Reading {
    concept: Concept,
    value: f64,
    unit: &'static str,
    #[serde(with = "time::iso")]
    time: EpochSeconds,
    confidence: f64,
    source: crate::clinical::Source,
}

impl Reading {
    fn new(concept: Concept, s: &Sample) -> Reading {
        Reading {
            concept,
            value: s.value,
            unit: concept.canonical_unit(),
            time: s.time,
            confidence: s.confidence,
            source: s.source,
        }
    }
}

async fn latest(
    State(st): State<ApiState>,
    Path(id): Path<String>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let store = st.engine.store();
    if !store.has_patient(&id) {
        return Err(not_found(format!("unknown patient {id:?}")));
    }
    let vitals: Vec<Reading> = Concept::ALL
        .into_iter()
        .filter_map(|c| store.latest(&id, c).ok().map(|s| Reading::new(c, &s)))
        .collect();
    Ok(Json(
        json!({ "patient_id": id, "bed_id": store.bed_of(&id), "vitals": vitals }),
    ))
}

fn concept_param(raw: &str) -> Option<Concept> {
    Concept::from_code(raw).or_else(|| SynonymTable::default().lookup(raw))
}

fn time_param(
    params: &HashMap<String, String>,
    key: &str,
) -> Result<Option<EpochSeconds>, ApiError> {
    match params.get(key) {
        None => Ok(None),
        Some(raw) => parse_iso8601(raw)
            .or_else(|| raw.parse().ok())
            .map(Some)
            .ok_or_else(|| bad_request(format!("{key}: expected ISO-8601 time, got {raw:?}"))),
    }
}

/// `concept` is required; `t1` defaults to the newest stored time and `t0` to
/// one hour before `t1`.
async fn series(
    State(st): State<ApiState>,
    Path(id): Path<String>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let store = st.engine.store();
    if !store.has_patient(&id) {
        return Err(not_found(format!("unknown patient {id:?}")));
    }
    let raw = params
        .get("concept")
        .ok_or_else(|| bad_request("missing concept parameter"))?;
    let concept =
        concept_param(raw).ok_or_else(|| bad_request(format!("unknown concept {raw:?}")))?;
    let t1 = time_param(&params, "t1")?
        .or_else(|| store.latest_time())
        .unwrap_or(0);
    let t0 = time_param(&params, "t0")?.unwrap_or(t1 - HOUR);
    if t0 > t1 {
        return Err(bad_request("t0 is after t1"));
    }
    let samples: Vec<Reading> = store
        .window(&id, concept, t0, t1)
        .iter()
        .map(|s| Reading::new(concept, s))
        .collect();
    Ok(Json(json!({
        "patient_id": id,
        "concept": concept,
        "unit": concept.canonical_unit(),
        "t0": time::to_iso8601(t0),
        "t1": time::to_iso8601(t1),
        "samples": samples,
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRequest {
    text: String,
    patient_id: Option<String>,
    #[serde(default)]
    lang: Lang,
    #[serde(default, with = "time::iso_opt")]
    now: Option<EpochSeconds>,
}

async fn query(
    State(st): State<ApiState>,
    Json(req): Json<QueryRequest>,
) -> Result<Response, ApiError> {
    let engine = st.engine.clone();
    // Remote adapters may block on the network.
    let result = tokio::task::spawn_blocking(move || {
        engine.ask(&req.text, req.patient_id.as_deref(), req.now, req.lang)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), "internal"))?;
    match result {
        Ok(resp) => Ok(Json(resp).into_response()),
        Err(e) => {
            let kind = match &e {
                QueryError::Unparseable => "unparseable_query",
                QueryError::MissingPatient => "missing_patient",
                QueryError::MissingConcept(_) => "missing_concept",
                QueryError::MissingThreshold(_) => "missing_threshold",
                QueryError::MissingAnchor => "missing_anchor",
                QueryError::UnknownPatient(_) => "unknown_patient",
                QueryError::PromptBuild(_) => "prompt_build",
            };
            let status = match e {
                QueryError::UnknownPatient(_) => StatusCode::NOT_FOUND,
                QueryError::PromptBuild(_) => StatusCode::INTERNAL_SERVER_ERROR,
                _ => StatusCode::BAD_REQUEST,
            };
            Err(ApiError(status, e.to_string(), kind))
        }
    }
}
