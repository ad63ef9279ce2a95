//! HTTP facade over the analysis engine with a file-backed store.
//!
//! | method | path                        | body / query                                |
//! |--------|-----------------------------|---------------------------------------------|
//! | POST   | `/collections`              | sites CSV; `?collection_id=` optional       |
//! | GET    | `/collections`              |                                             |
//! | POST   | `/variables`                | `.asc` body; `?variable_id&kind&stat&units` |
//! | GET    | `/variables`                |                                             |
//! | POST   | `/analyses`                 | `AnalysisRequest` JSON                      |
//! | GET    | `/analyses`                 |                                             |
//! | GET    | `/analyses/{id}`            |                                             |
//! | GET    | `/analyses/{id}/map`        |                                             |
//! | GET    | `/analyses/{id}/report.csv` |                                             |

mod error;
mod store;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use sitebias_core::collections::{parse_sites_csv, ExtentSpec};
use sitebias_core::grid::{Grid, GridConfig};
use sitebias_core::ingest::{decode_ascii_grid, ingest_raster, IngestOptions, VariableKind, ZonalStat};
use sitebias_core::pipeline::{run_analysis, write_outputs, AnalysisRequest, BINS_FILE, MAP_FILE, RESULT_FILE};
use sitebias_core::{Error, SCHEMA_VERSION};
use tokio::sync::Mutex;

pub use error::{ApiError, ApiResult};
pub use store::{AnalysisRecord, AnalysisStatus, Store};

/// Upload size cap; global rasters are large.
pub const MAX_BODY_BYTES: usize = 1 << 30;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    store: Store,
    grid: Grid,
    /// Serialises catalog and collection writes.
    writes: Mutex<()>,
}

impl AppState {
    pub fn open(data_dir: impl Into<std::path::PathBuf>, grid: GridConfig) -> sitebias_core::Result<Self> {
        let store = Store::open(data_dir, grid)?;
        let grid = store.catalog().build_grid()?;
        Ok(Self {
            inner: Arc::new(Inner {
                store,
                grid,
                writes: Mutex::new(()),
            }),
        })
    }

    pub fn store(&self) -> &Store {
        &self.inner.store
    }

    pub fn grid(&self) -> &Grid {
        &self.inner.grid
    }

    /// Reschedules analyses left pending or running by a previous process. Must be
    /// called inside a Tokio runtime.
    pub fn resume_unfinished(&self) -> sitebias_core::Result<usize> {
        let mut resumed = 0;
        for record in self.store().list_records()? {
            if matches!(record.status, AnalysisStatus::Pending | AnalysisStatus::Running) {
                tracing::info!(analysis_id = %record.analysis_id, "resuming analysis");
                schedule(self.clone(), record);
                resumed += 1;
            }
        }
        Ok(resumed)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/collections", post(upload_collection).get(list_collections))
        .route("/variables", post(upload_variable).get(list_variables))
        .route("/analyses", post(create_analysis).get(list_analyses))
        .route("/analyses/{id}", get(get_analysis))
        .route("/analyses/{id}/map", get(get_map))
        .route("/analyses/{id}/report.csv", get(get_report_csv))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, Error> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map_err(ApiError::from)
}

#[derive(Debug, Deserialize)]
struct CollectionQuery {
    collection_id: Option<String>,
}

async fn upload_collection(
    State(state): State<AppState>,
    Query(q): Query<CollectionQuery>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let id = q
        .collection_id
        .unwrap_or_else(|| format!("c-{}", uuid::Uuid::new_v4().simple()));
    let _guard = state.inner.writes.lock().await;
    let st = state.clone();
    let collection = blocking(move || {
        let collection = parse_sites_csv(body.as_ref(), &id)?;
        st.store().put_collection(&collection)?;
        Ok(collection)
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "schema_version": SCHEMA_VERSION,
            "collection_id": collection.collection_id,
            "site_count": collection.len(),
        })),
    ))
}

async fn list_collections(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    let ids = state.store().list_collections()?;
    Ok(Json(json!({ "schema_version": SCHEMA_VERSION, "collections": ids })))
}

#[derive(Debug, Deserialize)]
struct VariableQuery {
    variable_id: String,
    kind: String,
    stat: Option<String>,
    #[serde(default)]
    units: String,
}

async fn upload_variable(
    State(state): State<AppState>,
    Query(q): Query<VariableQuery>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let kind: VariableKind = q.kind.parse()?;
    let stat = match q.stat.as_deref() {
        Some(s) => s.parse()?,
        None => ZonalStat::for_kind(kind),
    };
    let mut opts = IngestOptions::new(q.variable_id, kind);
    opts.stat = stat;
    opts.units = q.units;
    opts.provenance = "uploaded".into();
    let _guard = state.inner.writes.lock().await;
    let st = state.clone();
    let entry = blocking(move || {
        let raster = decode_ascii_grid(&body)?;
        ingest_raster(st.store().catalog(), &raster, &opts)
    })
    .await?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "schema_version": SCHEMA_VERSION, "variable": entry })),
    ))
}

async fn list_variables(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    let variables = state.store().catalog().list_variables()?;
    Ok(Json(json!({ "schema_version": SCHEMA_VERSION, "variables": variables })))
}

async fn create_analysis(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<AnalysisRecord>)> {
    let request: AnalysisRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("invalid analysis request: {e}")))?;
    request.validate()?;
    let store = state.store();
    if !store.has_collection(&request.collection_id) {
        return Err(Error::NotFound {
            what: "collection",
            id: request.collection_id,
        }
        .into());
    }
    let mut variables = vec![&request.variable_id];
    if let ExtentSpec::Mask(mask) = &request.extent {
        variables.push(&mask.variable_id);
    }
    for v in variables {
        if !store.catalog().contains(v) {
            return Err(Error::NotFound {
                what: "variable",
                id: v.clone(),
            }
            .into());
        }
    }
    let record = AnalysisRecord::new(uuid::Uuid::new_v4().to_string(), request.with_resolved_seed());
    store.put_record(&record)?;
    schedule(state.clone(), record.clone());
    Ok((StatusCode::ACCEPTED, Json(record)))
}

async fn list_analyses(State(state): State<AppState>) -> ApiResult<Json<Value>> {
    let records = state.store().list_records()?;
    Ok(Json(json!({ "schema_version": SCHEMA_VERSION, "analyses": records })))
}

fn schedule(state: AppState, record: AnalysisRecord) {
    tokio::spawn(async move {
        let id = record.analysis_id.clone();
        let outcome = tokio::task::spawn_blocking(move || execute(&state, record)).await;
        match outcome {
            Ok(Ok(())) => {}
            Ok(Err(e)) => tracing::error!(analysis_id = %id, "could not persist analysis state: {e}"),
            Err(e) => tracing::error!(analysis_id = %id, "analysis task panicked: {e}"),
        }
    });
}

fn execute(state: &AppState, mut record: AnalysisRecord) -> sitebias_core::Result<()> {
    let store = state.store();
    record.status = AnalysisStatus::Running;
    store.put_record(&record)?;
    let dir = store.analysis_dir(&record.analysis_id);
    let outcome = store.load_collection(&record.request.collection_id).and_then(|collection| {
        let output = run_analysis(&record.request, state.grid(), store.catalog(), &collection)?;
        write_outputs(&dir, &output, state.grid())
    });
    match outcome {
        Ok(()) => {
            record.status = AnalysisStatus::Done;
            tracing::info!(analysis_id = %record.analysis_id, "analysis done");
        }
        Err(e) => {
            record.status = AnalysisStatus::Failed;
            record.error = Some(e.to_string());
            tracing::warn!(analysis_id = %record.analysis_id, "analysis failed: {e}");
        }
    }
    store.put_record(&record)
}

fn load_record(state: &AppState, id: &str) -> ApiResult<AnalysisRecord> {
    if uuid::Uuid::parse_str(id).is_err() {
        return Err(ApiError::UnknownAnalysis(id.to_string()));
    }
    state
        .store()
        .get_record(id)?
        .ok_or_else(|| ApiError::UnknownAnalysis(id.to_string()))
}

fn read_output(state: &AppState, record: &AnalysisRecord, file: &str) -> ApiResult<Vec<u8>> {
    if record.status != AnalysisStatus::Done {
        return Err(ApiError::NotDone {
            id: record.analysis_id.clone(),
            status: record.status.as_str(),
        });
    }
    let path = state.store().analysis_dir(&record.analysis_id).join(file);
    std::fs::read(&path).map_err(|source| Error::Io { path, source }.into())
}

/// The record, with the full result document under `result` once done.
async fn get_analysis(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let record = load_record(&state, &id)?;
    let mut body = serde_json::to_value(&record).map_err(Error::from)?;
    if record.status == AnalysisStatus::Done {
        let result: Value = serde_json::from_slice(&read_output(&state, &record, RESULT_FILE)?).map_err(Error::from)?;
        body["result"] = result;
    }
    Ok(Json(body))
}

async fn get_map(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let record = load_record(&state, &id)?;
    let bytes = read_output(&state, &record, MAP_FILE)?;
    Ok(([(header::CONTENT_TYPE, "application/geo+json")], bytes).into_response())
}

async fn get_report_csv(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let record = load_record(&state, &id)?;
    let bytes = read_output(&state, &record, BINS_FILE)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], bytes).into_response())
}
