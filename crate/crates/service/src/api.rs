//! HTTP API behind the review UI.
//!
//! ```text
//! POST /documents                          create a review project from {language, text, ...}
//! GET  /documents/{id}                     the project
//! POST /documents/{id}/detect?detectors=   run detectors, add suggestions
//! POST /documents/{id}/uniformize          propagate live suggestions document-wide
//! GET  /documents/{id}/suggestions         suggestions in document order
//! POST /suggestions/{id}/decision          {decision: accept|reject, version}
//! POST /documents/{id}/manual-span         {start, end, label, replacement?, version}
//! POST /documents/{id}/replacement         {surface, replacement, version}
//! GET  /documents/{id}/export?format=      txt (default) or html
//! GET  /documents/{id}/report              counts, and scores when gold is present
//! GET  /openapi.json
//! ```

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use anon_core::corpus::DocumentRecord;
use anon_core::detect::{DetectError, DetectorConfig, DetectorFailure, DetectorKind, LabelService, Pipeline};
use anon_core::redact::PlaceholderPolicy;
use anon_core::store::{project_of, Decision, Event, Project, ProjectReport, ProjectStore, StoreError, Suggestion};
use anon_core::uniformize::UniformizeConfig;
use anon_core::{CharSpan, Document, LabelTag};

pub const OPENAPI: &str = include_str!("../openapi.json");

type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Clone)]
pub struct AppState {
    store: Arc<ProjectStore>,
    detectors: Arc<DetectorConfig>,
    uniformize: UniformizeConfig,
    label_service: Option<Arc<dyn LabelService>>,
    /// Bounds concurrent detection runs.
    detect_slots: Arc<Semaphore>,
    clock: Clock,
}

impl AppState {
    pub fn new(store: ProjectStore, detectors: DetectorConfig, uniformize: UniformizeConfig) -> Self {
        let slots = std::thread::available_parallelism().map_or(4, |n| n.get());
        Self {
            store: Arc::new(store),
            detectors: Arc::new(detectors),
            uniformize,
            label_service: None,
            detect_slots: Arc::new(Semaphore::new(slots)),
            clock: Arc::new(Utc::now),
        }
    }

    /// Uses `service` for the model detector instead of an HTTP endpoint.
    pub fn with_label_service(mut self, service: Arc<dyn LabelService>) -> Self {
        self.label_service = Some(service);
        self
    }

    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    fn default_detectors(&self) -> Vec<DetectorKind> {
        let mut kinds = vec![DetectorKind::Regex, DetectorKind::Gazetteer, DetectorKind::Conventional];
        if self.detectors.model_endpoint.is_some() || self.label_service.is_some() {
            kinds.push(DetectorKind::Model);
        }
        kinds
    }

    fn pipeline(&self, kinds: &[DetectorKind]) -> Result<Pipeline, ApiError> {
        let mut p = Pipeline::new((*self.detectors).clone(), kinds)?;
        if let (Some(s), true) = (&self.label_service, kinds.contains(&DetectorKind::Model)) {
            p = p.with_label_service(s.clone());
        }
        Ok(p)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/documents", post(create_document))
        .route("/documents/{id}", get(get_document))
        .route("/documents/{id}/detect", post(detect))
        .route("/documents/{id}/uniformize", post(uniformize))
        .route("/documents/{id}/suggestions", get(suggestions))
        .route("/documents/{id}/manual-span", post(manual_span))
        .route("/documents/{id}/replacement", post(set_replacement))
        .route("/documents/{id}/export", get(export))
        .route("/documents/{id}/report", get(report))
        .route("/suggestions/{id}/decision", post(decide))
        .route("/openapi.json", get(openapi))
        .route("/health", get(|| async { "ok" }))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        (
            self.status,
            axum::Json(json!({"error": self.code, "message": self.message})),
        )
            .into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, code) = match &e {
            StoreError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            StoreError::InvalidId(_) => (StatusCode::NOT_FOUND, "not_found"),
            StoreError::AlreadyExists(_) => (StatusCode::CONFLICT, "already_exists"),
            StoreError::VersionConflict { .. } => (StatusCode::CONFLICT, "version_conflict"),
            StoreError::OverlapConflict { .. } => (StatusCode::CONFLICT, "overlap_conflict"),
            StoreError::InvalidTransition { .. } => (StatusCode::CONFLICT, "invalid_transition"),
            StoreError::Corpus(_) | StoreError::Redact(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            StoreError::IntegrityError(_) => (StatusCode::INTERNAL_SERVER_ERROR, "integrity"),
            StoreError::Io { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<DetectError> for ApiError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::DetectorUnavailable(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "detector_unavailable", e.to_string())
            }
            DetectError::ProtocolViolation(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "protocol_violation", e.to_string())
            }
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<tokio::task::JoinError> for ApiError {
    fn from(e: tokio::task::JoinError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

/// `Json` whose rejections use the API error body; malformed input is a 422.
pub struct Json<T>(pub T);

impl<S, T> FromRequest<S> for Json<T>
where
    axum::Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match axum::Json::<T>::from_request(req, state).await {
            Ok(axum::Json(v)) => Ok(Json(v)),
            Err(JsonRejection::MissingJsonContentType(e)) => Err(ApiError::new(
                StatusCode::UNSUPPORTED_MEDIA_TYPE,
                "content_type",
                e.body_text(),
            )),
            Err(e) => Err(ApiError::validation(e.body_text())),
        }
    }
}

impl<T: Serialize> IntoResponse for Json<T> {
    fn into_response(self) -> Response {
        axum::Json(self.0).into_response()
    }
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, StoreError> + Send + 'static,
    T: Send + 'static,
{
    Ok(tokio::task::spawn_blocking(f).await??)
}

async fn create_document(
    State(st): State<AppState>,
    Json(mut body): Json<Value>,
) -> Result<(StatusCode, Json<Project>), ApiError> {
    let policy = match body.as_object_mut().and_then(|o| o.remove("policy")) {
        Some(p) => {
            serde_json::from_value::<PlaceholderPolicy>(p).map_err(|e| ApiError::validation(format!("policy: {e}")))?
        }
        None => PlaceholderPolicy::default(),
    };
    let record: DocumentRecord = serde_json::from_value(body).map_err(|e| ApiError::validation(e.to_string()))?;
    let doc = Document::try_from(record).map_err(|e| ApiError::validation(e.to_string()))?;
    let store = st.store.clone();
    let project = blocking(move || store.create(doc, policy)).await?;
    tracing::info!(id = project.id(), "project created");
    Ok((StatusCode::CREATED, Json(project)))
}

async fn get_document(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<Project>, ApiError> {
    let store = st.store.clone();
    Ok(Json(blocking(move || store.get(&id)).await?))
}

#[derive(Debug, Deserialize)]
struct DetectQuery {
    detectors: Option<String>,
    version: Option<u64>,
}

#[derive(Debug, Serialize)]
struct MutationResponse {
    version: u64,
    added: Vec<String>,
    suggestions: Vec<Suggestion>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    partial: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    failures: Vec<DetectorFailure>,
}

impl MutationResponse {
    fn new(project: Project, added: Vec<String>) -> Self {
        Self {
            version: project.version,
            added,
            suggestions: project.suggestions,
            partial: false,
            warnings: Vec::new(),
            failures: Vec::new(),
        }
    }
}

async fn detect(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<DetectQuery>,
) -> Result<(StatusCode, Json<MutationResponse>), ApiError> {
    let kinds = match q.detectors.as_deref() {
        Some(list) => DetectorKind::parse_list(list)?,
        None => st.default_detectors(),
    };
    let pipeline = st.pipeline(&kinds)?;
    let store = st.store.clone();
    let lookup = id.clone();
    let project = blocking(move || store.get(&lookup)).await?;
    if let Some(v) = q.version.filter(|v| *v != project.version) {
        return Err(StoreError::VersionConflict {
            expected: v,
            found: project.version,
        }
        .into());
    }
    let result = {
        let _slot = st.detect_slots.acquire().await.expect("semaphore is never closed");
        let doc = project.document;
        tokio::task::spawn_blocking(move || pipeline.run(&doc)).await?
    };
    let store = st.store.clone();
    let at = (st.clock)();
    let spans = result.spans.clone();
    let (project, outcome) =
        blocking(move || store.mutate(&id, q.version, Event::SuggestionsAdded { spans }, at)).await?;
    let status = if result.unavailable() {
        StatusCode::BAD_GATEWAY
    } else {
        StatusCode::OK
    };
    let mut resp = MutationResponse::new(project, outcome.added);
    resp.partial = result.is_partial();
    resp.warnings = result.warnings;
    resp.failures = result.failures;
    Ok((status, Json(resp)))
}

#[derive(Debug, Deserialize)]
struct VersionQuery {
    version: Option<u64>,
}

async fn uniformize(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<VersionQuery>,
) -> Result<Json<MutationResponse>, ApiError> {
    let store = st.store.clone();
    let cfg = st.uniformize.clone();
    let at = (st.clock)();
    let (project, outcome) = blocking(move || {
        let project = store.get(&id)?;
        let spans = project
            .propagation(&cfg)
            .map_err(|e| StoreError::IntegrityError(e.to_string()))?;
        store.mutate(
            &id,
            q.version.or(Some(project.version)),
            Event::SuggestionsAdded { spans },
            at,
        )
    })
    .await?;
    Ok(Json(MutationResponse::new(project, outcome.added)))
}

#[derive(Debug, Serialize)]
struct SuggestionList {
    version: u64,
    suggestions: Vec<Suggestion>,
}

async fn suggestions(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<SuggestionList>, ApiError> {
    let store = st.store.clone();
    let p = blocking(move || store.get(&id)).await?;
    Ok(Json(SuggestionList {
        version: p.version,
        suggestions: p.suggestions,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    decision: Decision,
    version: u64,
    #[serde(default)]
    actor: Option<String>,
}

#[derive(Debug, Serialize)]
struct DecisionResponse {
    version: u64,
    suggestion: Suggestion,
}

async fn decide(
    State(st): State<AppState>,
    Path(sid): Path<String>,
    Json(body): Json<DecisionBody>,
) -> Result<Json<DecisionResponse>, ApiError> {
    let Some(pid) = project_of(&sid).map(str::to_string) else {
        return Err(StoreError::NotFound(format!("suggestion {sid}")).into());
    };
    let store = st.store.clone();
    let at = (st.clock)();
    let event = Event::Decided {
        suggestion_id: sid.clone(),
        decision: body.decision,
        actor: body.actor,
    };
    let (project, _) = blocking(move || store.mutate(&pid, Some(body.version), event, at)).await?;
    let suggestion = project.suggestion(&sid).cloned().expect("decided suggestion exists");
    Ok(Json(DecisionResponse {
        version: project.version,
        suggestion,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManualBody {
    start: usize,
    end: usize,
    label: LabelTag,
    #[serde(default)]
    replacement: Option<String>,
    version: u64,
    #[serde(default)]
    actor: Option<String>,
}

async fn manual_span(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<ManualBody>,
) -> Result<(StatusCode, Json<MutationResponse>), ApiError> {
    let span = CharSpan::try_new(body.start, body.end)
        .ok_or_else(|| ApiError::validation(format!("empty or inverted span [{}, {})", body.start, body.end)))?;
    let store = st.store.clone();
    let at = (st.clock)();
    let event = Event::ManualAdded {
        span,
        label: body.label,
        replacement: body.replacement,
        actor: body.actor,
    };
    let (project, outcome) = blocking(move || store.mutate(&id, Some(body.version), event, at)).await?;
    Ok((StatusCode::CREATED, Json(MutationResponse::new(project, outcome.added))))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplacementBody {
    surface: String,
    replacement: String,
    version: u64,
}

async fn set_replacement(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<ReplacementBody>,
) -> Result<Json<MutationResponse>, ApiError> {
    if body.replacement.is_empty() {
        return Err(ApiError::validation("replacement must not be empty"));
    }
    let store = st.store.clone();
    let at = (st.clock)();
    let event = Event::ReplacementSet {
        surface: body.surface,
        replacement: body.replacement,
    };
    let (project, _) = blocking(move || store.mutate(&id, Some(body.version), event, at)).await?;
    Ok(Json(MutationResponse::new(project, Vec::new())))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let store = st.store.clone();
    let project = blocking(move || store.get(&id)).await?;
    match q.format.as_deref().unwrap_or("txt") {
        "txt" => {
            let text = project.anonymize()?.text;
            Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response())
        }
        "html" => {
            let html = project.export_html()?;
            Ok(([(header::CONTENT_TYPE, "text/html; charset=utf-8")], html).into_response())
        }
        other => Err(ApiError::validation(format!(
            "unknown export format {other:?}; use txt or html"
        ))),
    }
}

async fn report(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<ProjectReport>, ApiError> {
    let store = st.store.clone();
    let project = blocking(move || store.get(&id)).await?;
    Ok(Json(project.report()))
}

async fn openapi() -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/json")], OPENAPI)
}
