//! HTTP interface of the measurement station, versioned under `/api/v1`.
//!
//! One campaign, one modem backend. Measurements are synchronous: the
//! request returns once the position is committed. At most one measurement
//! runs and one waits; anything beyond that gets `409`. Readers work on an
//! `Arc` snapshot of the campaign, and a position becomes visible only when
//! all its samples are committed.

pub mod svg;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use lte_mapper_core::analysis::{analysis_report, scatter3d_export, ColorBin, ColorScale};
use lte_mapper_core::campaign::{
    sample_indoor, sample_outdoor, Campaign, CampaignError, FloorPlan, MeasurementSettings,
    PendingPosition, DEFAULT_DRX_CYCLE,
};
use lte_mapper_core::clock::{Clock, SystemClock};
use lte_mapper_core::model::{IndoorMeta, MeasurementId, MeasurementRecord, PlanPosition};
use lte_mapper_core::persistence::{export_csv, save_dir};
use lte_mapper_core::protocol::{Capabilities, ModemBackend, ProtocolError};

/// Measurements allowed in flight plus waiting.
const MAX_PENDING: usize = 2;

pub type Backend = Box<dyn ModemBackend>;

pub struct Config {
    /// Shown in `/status`, e.g. `sim:fixtures/bonn.toml`.
    pub backend_label: Option<String>,
    pub drx_cycle: Duration,
    pub campaign_dir: Option<PathBuf>,
    pub color_scale: ColorScale,
    pub clock: Arc<dyn Clock>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            backend_label: None,
            drx_cycle: DEFAULT_DRX_CYCLE,
            campaign_dir: None,
            color_scale: ColorScale::default(),
            clock: Arc::new(SystemClock),
        }
    }
}

struct Inner {
    config: Config,
    capabilities: Option<Capabilities>,
    backend: Arc<tokio::sync::Mutex<Option<Backend>>>,
    campaign: RwLock<Arc<Campaign>>,
    pending: AtomicUsize,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(campaign: Campaign, backend: Option<Backend>, config: Config) -> Self {
        Self(Arc::new(Inner {
            capabilities: backend.as_ref().map(|b| b.capabilities()),
            backend: Arc::new(tokio::sync::Mutex::new(backend)),
            campaign: RwLock::new(Arc::new(campaign)),
            pending: AtomicUsize::new(0),
            config,
        }))
    }

    /// Current campaign. Cheap; later commits do not affect it.
    pub fn snapshot(&self) -> Arc<Campaign> {
        self.0.campaign.read().expect("campaign lock").clone()
    }

    fn update<T>(&self, f: impl FnOnce(&mut Campaign) -> T) -> Result<T, ApiError> {
        let mut guard = self.0.campaign.write().expect("campaign lock");
        let mut next = (**guard).clone();
        let out = f(&mut next);
        if let Some(dir) = &self.0.config.campaign_dir {
            save_dir(&next, dir).map_err(|e| ApiError::internal(format!("saving campaign: {e}")))?;
        }
        *guard = Arc::new(next);
        Ok(out)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/v1/status", get(status))
        .route("/api/v1/measurements/outdoor", post(measure_outdoor))
        .route("/api/v1/measurements/indoor", post(measure_indoor))
        .route("/api/v1/plans", get(list_plans))
        .route("/api/v1/plans/:name", get(get_plan).post(upload_plan))
        .route("/api/v1/plans/:name/image", get(plan_image))
        .route("/api/v1/records", get(list_records))
        .route("/api/v1/records/:id", get(get_record))
        .route("/api/v1/analysis", get(analysis))
        .route("/api/v1/scatter3d", get(scatter3d))
        .route("/api/v1/export/:file", get(export))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": code, "message": message.into() }),
        }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn backend_kind(e: &ProtocolError) -> &'static str {
    match e {
        ProtocolError::MalformedResponse(_) => "malformed_response",
        ProtocolError::UnsupportedRat(_) => "unsupported_rat",
        ProtocolError::ChecksumMismatch { .. } => "checksum_mismatch",
        ProtocolError::NoFix => "no_fix",
        ProtocolError::MalformedSentence(_) => "malformed_sentence",
        ProtocolError::Timeout(_) => "timeout",
        ProtocolError::ErrorStatus(_) => "error_status",
        ProtocolError::MissingCapability(_) => "missing_capability",
        ProtocolError::InsufficientFixes { .. } => "insufficient_fixes",
        ProtocolError::Invalid(_) => "invalid_sample",
        ProtocolError::Transport(_) => "transport",
    }
}

impl From<CampaignError> for ApiError {
    fn from(e: CampaignError) -> Self {
        let msg = e.to_string();
        match e {
            CampaignError::Backend(p) => Self {
                status: StatusCode::BAD_GATEWAY,
                body: json!({
                    "error": "backend_failure",
                    "message": msg,
                    "cause": { "kind": backend_kind(&p), "detail": p.to_string() },
                }),
            },
            CampaignError::UnknownPlan(_) => Self::not_found(msg),
            CampaignError::OutOfBounds { .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "out_of_bounds", msg)
            }
            CampaignError::DuplicatePlanId(_) => Self::new(StatusCode::CONFLICT, "duplicate_plan", msg),
            CampaignError::UndecodableImage(..) | CampaignError::InvalidPlanName(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_plan", msg)
            }
        }
    }
}

/// A record with its color bin, as served to clients.
#[derive(Debug, Serialize)]
pub struct RecordView {
    #[serde(flatten)]
    pub record: MeasurementRecord,
    pub bin: ColorBin,
}

fn view(state: &AppState, r: &MeasurementRecord) -> RecordView {
    RecordView {
        record: r.clone(),
        bin: state.0.config.color_scale.bin(r.sample.rsrp),
    }
}

async fn status(State(state): State<AppState>) -> Json<serde_json::Value> {
    let c = state.snapshot();
    let cfg = &state.0.config;
    Json(json!({
        "backend": cfg.backend_label,
        "capabilities": state.0.capabilities,
        "campaign_id": c.campaign_id,
        "building": c.building_label,
        "records": c.records().len(),
        "next_position_id": c.next_position_id(),
        "plans": c.plans().count(),
        "pending_measurements": state.0.pending.load(Ordering::SeqCst),
        "drx_cycle_s": cfg.drx_cycle.as_secs_f64(),
        "default_settings": MeasurementSettings::default(),
        "color_scale": cfg.color_scale,
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutdoorRequest {
    #[serde(default)]
    pub settings: Option<MeasurementSettings>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndoorRequest {
    pub map_id: String,
    pub x: f64,
    pub y: f64,
    pub room: String,
    pub floor: i32,
    #[serde(default)]
    pub outdoor_flag: bool,
    #[serde(default)]
    pub settings: Option<MeasurementSettings>,
}

#[derive(Debug, Serialize)]
pub struct MeasurementResponse {
    pub records: Vec<RecordView>,
}

/// Releases a queue slot when dropped.
struct Slot(AppState);

impl Drop for Slot {
    fn drop(&mut self) {
        self.0 .0.pending.fetch_sub(1, Ordering::SeqCst);
    }
}

/// Validates settings, takes a queue slot, runs `job` on the backend in a
/// blocking thread and commits the result.
async fn run_measurement<F>(
    state: AppState,
    settings: Option<MeasurementSettings>,
    job: F,
) -> Result<Json<MeasurementResponse>, ApiError>
where
    F: FnOnce(&mut dyn ModemBackend, &lte_mapper_core::campaign::ValidSettings, &dyn Clock) -> Result<PendingPosition, CampaignError>
        + Send
        + 'static,
{
    if state.0.capabilities.is_none() {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "no_backend",
            "no modem backend attached",
        ));
    }
    let settings = settings
        .unwrap_or_default()
        .validate(state.0.config.drx_cycle)
        .map_err(|e| ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({ "error": "invalid_settings", "invariant": e.invariant, "message": e.message }),
        })?;
    if state.0.pending.fetch_add(1, Ordering::SeqCst) >= MAX_PENDING {
        state.0.pending.fetch_sub(1, Ordering::SeqCst);
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "busy",
            "a measurement is running and another is queued",
        ));
    }
    let _slot = Slot(state.clone());
    let mut guard = state.0.backend.clone().lock_owned().await;
    let clock = state.0.config.clock.clone();
    // The guard comes back out so the commit happens before the next
    // measurement can start; ids then follow measurement order.
    let (_guard, pending) = tokio::task::spawn_blocking(move || {
        let backend = guard.as_mut().expect("backend checked above");
        let out = job(backend.as_mut(), &settings, clock.as_ref());
        (guard, out)
    })
    .await
    .map_err(|e| ApiError::internal(format!("measurement task: {e}")))?;

    let pending = pending?;
    let records = state.update(|c| c.commit(pending).to_vec())?;
    Ok(Json(MeasurementResponse {
        records: records.iter().map(|r| view(&state, r)).collect(),
    }))
}

async fn measure_outdoor(
    State(state): State<AppState>,
    body: Option<Json<OutdoorRequest>>,
) -> Result<Json<MeasurementResponse>, ApiError> {
    let req = body.map(|b| b.0).unwrap_or_default();
    run_measurement(state, req.settings, |backend, settings, clock| {
        sample_outdoor(settings, backend, clock)
    })
    .await
}

async fn measure_indoor(
    State(state): State<AppState>,
    Json(req): Json<IndoorRequest>,
) -> Result<Json<MeasurementResponse>, ApiError> {
    let plan = state
        .snapshot()
        .plan(&req.map_id)
        .cloned()
        .ok_or_else(|| ApiError::from(CampaignError::UnknownPlan(req.map_id.clone())))?;
    if !plan.contains(req.x, req.y) {
        return Err(CampaignError::OutOfBounds {
            map_id: req.map_id,
            x: req.x,
            y: req.y,
            width: plan.width,
            height: plan.height,
        }
        .into());
    }
    let click = PlanPosition {
        map_id: req.map_id,
        x: req.x,
        y: req.y,
    };
    let meta = IndoorMeta {
        room_id: req.room,
        floor: req.floor,
        outdoor_flag: req.outdoor_flag,
    };
    run_measurement(state, req.settings, move |backend, settings, clock| {
        sample_indoor(settings, backend, clock, &plan, click, meta)
    })
    .await
}

async fn list_plans(State(state): State<AppState>) -> Json<Vec<FloorPlan>> {
    Json(state.snapshot().plans().cloned().collect())
}

async fn get_plan(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<FloorPlan>, ApiError> {
    state
        .snapshot()
        .plan(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("plan {id}")))
}

/// `POST /plans/{file_name}` with the raw image as body. The plan id is
/// the file stem.
async fn upload_plan(
    State(state): State<AppState>,
    Path(name): Path<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<FloorPlan>), ApiError> {
    let plan = state.update(|c| c.upload_plan(&name, body.to_vec()).cloned())??;
    Ok((StatusCode::CREATED, Json(plan)))
}

async fn plan_image(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let c = state.snapshot();
    let p = c
        .plan(&id)
        .ok_or_else(|| ApiError::not_found(format!("plan {id}")))?;
    Ok((
        [(header::CONTENT_TYPE, p.content_type.clone())],
        p.image.as_slice().to_vec(),
    )
        .into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordFilter {
    pub building: Option<String>,
    pub floor: Option<i32>,
    pub room: Option<String>,
    pub bin: Option<ColorBin>,
    pub map: Option<String>,
    /// `outdoor` for geodetic records, `indoor` for plan records.
    pub kind: Option<String>,
}

impl RecordFilter {
    fn keep(&self, building: &str, r: &MeasurementRecord, scale: &ColorScale) -> bool {
        self.building.as_deref().is_none_or(|b| b == building)
            && self.floor.is_none_or(|f| r.floor() == Some(f))
            && self
                .room
                .as_deref()
                .is_none_or(|room| r.meta().is_some_and(|m| m.room_id == room))
            && self
                .map
                .as_deref()
                .is_none_or(|m| r.plan().is_some_and(|p| p.map_id == m))
            && self.bin.is_none_or(|b| scale.bin(r.sample.rsrp) == b)
            && match self.kind.as_deref() {
                Some("outdoor") => r.is_outdoor(),
                Some("indoor") => !r.is_outdoor(),
                _ => true,
            }
    }
}

async fn list_records(
    State(state): State<AppState>,
    Query(filter): Query<RecordFilter>,
) -> Result<Json<Vec<RecordView>>, ApiError> {
    if let Some(k) = filter.kind.as_deref() {
        if k != "outdoor" && k != "indoor" {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "invalid_filter",
                format!("kind must be outdoor or indoor, got {k:?}"),
            ));
        }
    }
    let c = state.snapshot();
    let scale = state.0.config.color_scale;
    Ok(Json(
        c.records()
            .iter()
            .filter(|r| filter.keep(&c.building_label, r, &scale))
            .map(|r| view(&state, r))
            .collect(),
    ))
}

async fn get_record(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<RecordView>, ApiError> {
    let parsed: MeasurementId = id
        .parse()
        .map_err(|e: lte_mapper_core::model::ParseIdError| ApiError::not_found(e.to_string()))?;
    let c = state.snapshot();
    c.record(parsed)
        .map(|r| Json(view(&state, r)))
        .ok_or_else(|| ApiError::not_found(format!("record {id}")))
}

#[derive(Debug, Default, Deserialize)]
pub struct FormatQuery {
    pub format: Option<String>,
}

async fn analysis(State(state): State<AppState>, Query(q): Query<FormatQuery>) -> Response {
    let c = state.snapshot();
    let report = analysis_report(&[(c.building_label.as_str(), c.records())]);
    match q.format.as_deref() {
        Some("text") => (
            [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
            report.to_text(),
        )
            .into_response(),
        _ => Json(report).into_response(),
    }
}

async fn scatter3d(State(state): State<AppState>) -> Response {
    let c = state.snapshot();
    Json(scatter3d_export(c.records(), &state.0.config.color_scale)).into_response()
}

async fn export(State(state): State<AppState>, Path(file): Path<String>) -> Result<Response, ApiError> {
    let files = export_csv(&state.snapshot());
    let bytes = match file.as_str() {
        "outdoor.csv" => files.outdoor,
        "indoor.csv" => files.indoor,
        _ => return Err(ApiError::not_found(format!("export {file}"))),
    };
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{file}\"")),
        ],
        bytes,
    )
        .into_response())
}
