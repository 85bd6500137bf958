//! JSON API for the manager dashboard and author validation, plus the
//! OAI-PMH provider and Signposting links.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, RawQuery, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode, header};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};
use softlink_core::codemeta::{CodeMetaRecord, enrich_from_repo, serialize_jsonld};
use softlink_core::expose::{ExposeConfig, codemeta_path, exposed_papers, serve_oaipmh, signposting_headers};
use softlink_core::lifecycle::{
    Amendments, AssetSnapshot, AuthorDecision, Event, EventKind, LifecycleEngine, LifecycleError, LifecycleRecord,
    LifecycleState, MentionContext,
};
use softlink_core::swhid::ArchivalClient;
use tower_http::services::ServeDir;

use crate::http::origin_dir;

pub struct AppState {
    pub engine: Arc<LifecycleEngine>,
    pub archival: Arc<dyn ArchivalClient>,
    pub expose: ExposeConfig,
    pub repo_metadata_dir: Option<PathBuf>,
}

pub fn router(state: Arc<AppState>, dashboard_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/api/pending", get(pending))
        .route("/api/records", get(list_records))
        .route("/api/records/{id}", get(get_record))
        .route("/api/records/{id}/manager-approve", post(manager_approve))
        .route("/api/records/{id}/manager-reject", post(manager_reject))
        .route("/api/records/{id}/reissue", post(reissue))
        .route("/api/records/{id}/register", post(register))
        .route("/api/records/{id}/expose", post(expose))
        .route("/api/validate/{token}", get(validation_view).post(validation_decision))
        .route("/api/assets/{id}/codemeta.json", get(codemeta))
        .route("/api/papers/{paper_id}/links", get(paper_links))
        .route("/oai", get(oai_get).post(oai_post))
        .with_state(state);
    match dashboard_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code,
            message: message.into(),
        }
    }
}

impl From<LifecycleError> for ApiError {
    fn from(e: LifecycleError) -> Self {
        let (status, code) = match &e {
            LifecycleError::IllegalTransition { .. } => (StatusCode::CONFLICT, "illegal_transition"),
            LifecycleError::Conflict(_) | LifecycleError::SequenceError { .. } => (StatusCode::CONFLICT, "conflict"),
            LifecycleError::InvalidToken => (StatusCode::GONE, "invalid_token"),
            LifecycleError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            LifecycleError::InvalidPayload { .. } | LifecycleError::WrongActor { .. } => {
                (StatusCode::BAD_REQUEST, "invalid_request")
            }
            LifecycleError::Archival(_) => (StatusCode::BAD_GATEWAY, "archival_error"),
            LifecycleError::Storage(_) | LifecycleError::RecordMismatch { .. } | LifecycleError::EmptyHistory => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal_error")
            }
        };
        if status.is_server_error() {
            log::error!("{e}");
        }
        ApiError {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// A lifecycle record as returned by the API. Validation tokens are
/// credentials for the author alone and never appear here.
#[derive(Debug, Serialize)]
pub struct RecordView {
    pub record_id: String,
    pub paper_id: String,
    pub candidate_id: String,
    pub state: LifecycleState,
    pub name: String,
    pub asset: AssetSnapshot,
    pub swhid: Option<String>,
    pub archival_failure: Option<String>,
    pub codemeta_url: String,
    pub history: Vec<Event>,
}

/// The event history with token values removed.
pub fn redacted_history(record: &LifecycleRecord) -> Vec<Event> {
    record
        .history
        .iter()
        .map(|e| {
            let mut e = e.clone();
            if e.kind == EventKind::ValidationIssued {
                e.payload.remove("token");
            }
            e
        })
        .collect()
}

impl RecordView {
    pub fn of(record: &LifecycleRecord) -> Self {
        RecordView {
            record_id: record.record_id.clone(),
            paper_id: record.paper_id.clone(),
            candidate_id: record.candidate_id.clone(),
            state: record.state,
            name: record.name().to_string(),
            asset: record.asset.clone(),
            swhid: record.swhid.as_ref().map(ToString::to_string),
            archival_failure: record.archival_failure.clone(),
            codemeta_url: codemeta_path(&record.record_id),
            history: redacted_history(record),
        }
    }
}

fn views(records: &[Arc<LifecycleRecord>]) -> Json<Vec<RecordView>> {
    Json(records.iter().map(|r| RecordView::of(r)).collect())
}

async fn pending(State(s): State<Arc<AppState>>) -> Json<Vec<RecordView>> {
    views(&s.engine.pending())
}

#[derive(Deserialize)]
struct ListQuery {
    state: Option<String>,
    paper: Option<String>,
}

async fn list_records(State(s): State<Arc<AppState>>, Query(q): Query<ListQuery>) -> ApiResult<Json<Vec<RecordView>>> {
    let mut records = match &q.paper {
        Some(p) => s.engine.for_paper(p),
        None => s.engine.records(),
    };
    if let Some(state) = &q.state {
        let state: LifecycleState = serde_json::from_value(Value::String(state.clone()))
            .map_err(|_| ApiError::bad_request("bad_state", format!("unknown state `{state}`")))?;
        records.retain(|r| r.state == state);
    }
    Ok(views(&records))
}

async fn get_record(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<RecordView>> {
    Ok(Json(RecordView::of(&*s.engine.get(&id)?)))
}

/// Parses an optional JSON body. An empty body yields the default.
fn optional_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("malformed_body", e.to_string()))
}

async fn manager_approve(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<RecordView>> {
    let (record, _token, message) = s.engine.manager_approve(&id)?;
    log::info!("{id}: approved, validation request queued for {}", message.to);
    Ok(Json(RecordView::of(&record)))
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RejectBody {
    reason: Option<String>,
}

async fn manager_reject(
    State(s): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<RecordView>> {
    let body: RejectBody = optional_body(&body)?;
    Ok(Json(RecordView::of(&*s.engine.manager_reject(&id, body.reason.as_deref())?)))
}

async fn reissue(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let (record, _token, message) = s.engine.issue_validation(&id)?;
    Ok(Json(json!({"record": RecordView::of(&record), "notified": message.is_some()})))
}

async fn register(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<RecordView>> {
    let state = s.clone();
    // archival polls with sleeps between attempts
    let record = tokio::task::spawn_blocking(move || state.engine.register_and_archive(&id, state.archival.as_ref()))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal_error",
            message: e.to_string(),
        })??;
    Ok(Json(RecordView::of(&record)))
}

async fn expose(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<RecordView>> {
    Ok(Json(RecordView::of(&*s.engine.expose(&id)?)))
}

/// What the author sees behind a validation link.
#[derive(Debug, Serialize)]
struct ValidationView {
    record_id: String,
    paper_id: String,
    paper_title: Option<String>,
    state: LifecycleState,
    name: String,
    versions: Vec<String>,
    urls: Vec<String>,
    publishers: Vec<String>,
    contexts: Vec<MentionContext>,
    expires: Option<String>,
}

async fn validation_view(State(s): State<Arc<AppState>>, UrlPath(token): UrlPath<String>) -> ApiResult<Json<ValidationView>> {
    let r = s.engine.resolve_token(&token)?;
    let c = &r.asset.candidate;
    Ok(Json(ValidationView {
        record_id: r.record_id.clone(),
        paper_id: r.paper_id.clone(),
        paper_title: r.asset.paper_title.clone(),
        state: r.state,
        name: c.canonical_name.clone(),
        versions: c.versions.iter().cloned().collect(),
        urls: c.urls.iter().map(ToString::to_string).collect(),
        publishers: c.publishers.iter().cloned().collect(),
        contexts: r.asset.contexts.clone(),
        expires: r.validation_token.as_ref().map(|t| t.expiry.to_rfc3339()),
    }))
}

#[derive(Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case", deny_unknown_fields)]
enum DecisionBody {
    Confirm,
    Amend { amendments: Amendments },
    Reject {
        #[serde(default)]
        reason: Option<String>,
    },
}

async fn validation_decision(
    State(s): State<Arc<AppState>>,
    UrlPath(token): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<RecordView>> {
    let body: DecisionBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("malformed_body", e.to_string()))?;
    let decision = match body {
        DecisionBody::Confirm => AuthorDecision::Confirm,
        DecisionBody::Amend { amendments } => {
            if amendments == Amendments::default() {
                return Err(ApiError::bad_request("empty_amendment", "an amendment must change something"));
            }
            if let Some(u) = &amendments.url {
                url::Url::parse(u).map_err(|e| ApiError::bad_request("bad_url", format!("`{u}`: {e}")))?;
            }
            AuthorDecision::Amend(amendments)
        }
        DecisionBody::Reject { reason } => AuthorDecision::Reject { reason },
    };
    Ok(Json(RecordView::of(&*s.engine.author_decision(&token, decision)?)))
}

/// The record's CodeMeta description, enriched from repository metadata
/// when some is available for its code repository.
pub fn codemeta_document(record: &LifecycleRecord, repo_metadata_dir: Option<&Path>) -> CodeMetaRecord {
    let base = record.codemeta();
    let (Some(dir), Some(repo)) = (repo_metadata_dir, base.code_repository.as_ref()) else {
        return base;
    };
    let Some(origin) = origin_dir(dir, repo) else {
        return base;
    };
    for file in ["codemeta.json", "CITATION.cff"] {
        if let Ok(bytes) = fs::read(origin.join(file)) {
            return match enrich_from_repo(&base, &bytes) {
                Ok(enriched) => enriched,
                Err(skipped) => {
                    log::warn!("{}: enrichment skipped: {}", record.record_id, skipped.reason);
                    skipped.record
                }
            };
        }
    }
    base
}

async fn codemeta(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let record = s.engine.get(&id)?;
    let doc = codemeta_document(&record, s.repo_metadata_dir.as_deref());
    let body = serialize_jsonld(&doc).map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        code: "internal_error",
        message: e.to_string(),
    })?;
    Ok(([(header::CONTENT_TYPE, "application/ld+json")], body).into_response())
}

async fn paper_links(State(s): State<Arc<AppState>>, UrlPath(paper_id): UrlPath<String>) -> ApiResult<Response> {
    let records = s.engine.for_paper(&paper_id);
    let papers = exposed_papers(records.iter().map(|r| r.as_ref()), &s.expose.relation_type);
    let paper = papers.iter().find(|p| p.link.paper_id == paper_id);
    let links = signposting_headers(paper, &paper_id, &s.expose).map_err(|e| ApiError {
        status: StatusCode::NOT_FOUND,
        code: "not_found",
        message: e.to_string(),
    })?;
    let mut headers = HeaderMap::new();
    let joined = links.join(", ");
    headers.insert(
        header::LINK,
        HeaderValue::from_str(&joined).map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal_error",
            message: e.to_string(),
        })?,
    );
    let link = paper.map(|p| &p.link);
    Ok((headers, Json(link)).into_response())
}

fn oai_response(state: &AppState, params: Vec<(String, String)>) -> Response {
    let records = state.engine.in_state(LifecycleState::Exposed);
    let papers = exposed_papers(records.iter().map(|r| r.as_ref()), &state.expose.relation_type);
    let xml = serve_oaipmh(&params, &papers, &state.expose, Utc::now());
    ([(header::CONTENT_TYPE, "text/xml; charset=utf-8")], xml).into_response()
}

fn form_pairs(raw: &[u8]) -> Vec<(String, String)> {
    url::form_urlencoded::parse(raw).into_owned().collect()
}

async fn oai_get(State(s): State<Arc<AppState>>, RawQuery(q): RawQuery) -> Response {
    oai_response(&s, form_pairs(q.unwrap_or_default().as_bytes()))
}

async fn oai_post(State(s): State<Arc<AppState>>, body: Bytes) -> Response {
    oai_response(&s, form_pairs(&body))
}
