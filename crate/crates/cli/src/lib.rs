//! REST and server-sent-event surface over [`Service`].

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chatnet_core::eval::{EvalRecord, ReportFormat};
use chatnet_core::pipeline::AnalysisRequest;
use chatnet_core::service::{Command, Service, ServiceError, StoredEvent};
use futures::stream::{self, Stream};
use serde::Deserialize;
use serde_json::json;

const POLL_INTERVAL: Duration = Duration::from_millis(100);
const MAX_WAIT_MS: u64 = 30_000;

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ServiceError::AttachmentMissing(_) => (StatusCode::UNPROCESSABLE_ENTITY, "attachment_missing"),
            ServiceError::IllegalTransition(_) => (StatusCode::CONFLICT, "illegal_transition"),
            ServiceError::CorruptLog(_) => (StatusCode::INTERNAL_SERVER_ERROR, "corrupt_log"),
            ServiceError::Config(_) | ServiceError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (status, Json(json!({"error": kind, "message": self.0.to_string()}))).into_response()
    }
}

type Shared = Arc<Service>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::Internal(e.to_string())))?
        .map_err(ApiError)
}

async fn create_session(State(svc): State<Shared>, Json(req): Json<AnalysisRequest>) -> Result<Response, ApiError> {
    let id = blocking(move || svc.create_session(req)).await?;
    Ok((StatusCode::CREATED, Json(json!({"id": id}))).into_response())
}

async fn list_sessions(State(svc): State<Shared>) -> Result<Response, ApiError> {
    let ids = blocking(move || svc.session_ids()).await?;
    Ok(Json(json!({"sessions": ids})).into_response())
}

async fn get_session(State(svc): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(blocking(move || svc.snapshot(&id)).await?).into_response())
}

async fn advance(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Json(cmd): Json<Command>,
) -> Result<Response, ApiError> {
    Ok(Json(blocking(move || svc.advance(&id, cmd)).await?).into_response())
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    after: u64,
    /// Long-poll: wait up to this long for a new event.
    #[serde(default)]
    wait_ms: u64,
}

async fn events(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> Result<Json<Vec<StoredEvent>>, ApiError> {
    let deadline = tokio::time::Instant::now() + Duration::from_millis(q.wait_ms.min(MAX_WAIT_MS));
    loop {
        let (s, i) = (svc.clone(), id.clone());
        let batch = blocking(move || s.events_after(&i, q.after)).await?;
        if !batch.is_empty() || tokio::time::Instant::now() >= deadline {
            return Ok(Json(batch));
        }
        tokio::time::sleep(POLL_INTERVAL).await;
    }
}

fn event_stream(svc: Shared, id: String, after: u64) -> impl Stream<Item = Result<Event, Infallible>> {
    stream::unfold((svc, id, after, Vec::<StoredEvent>::new()), |(svc, id, mut last, mut pending)| async move {
        loop {
            if !pending.is_empty() {
                let e = pending.remove(0);
                last = e.seq;
                let ev = Event::default().id(e.seq.to_string()).event(e.kind.clone()).json_data(&e).expect("event serializes");
                return Some((Ok(ev), (svc, id, last, pending)));
            }
            let (s, i) = (svc.clone(), id.clone());
            match tokio::task::spawn_blocking(move || s.events_after(&i, last)).await {
                Ok(Ok(batch)) if !batch.is_empty() => pending = batch,
                Ok(Ok(_)) => tokio::time::sleep(POLL_INTERVAL).await,
                _ => return None,
            }
        }
    })
}

/// Server-sent events in seq order, resuming after `after` or `Last-Event-ID`.
async fn stream_events(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok())
        .unwrap_or(q.after);
    let (s, i) = (svc.clone(), id.clone());
    blocking(move || s.snapshot(&i)).await?;
    Ok(Sse::new(event_stream(svc, id, resume)).keep_alive(KeepAlive::default()))
}

async fn artifact(State(svc): State<Shared>, Path((id, name)): Path<(String, String)>) -> Result<Response, ApiError> {
    let (ctype, body) = blocking(move || svc.artifact(&id, &name)).await?;
    Ok(([(header::CONTENT_TYPE, ctype)], body).into_response())
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<String>,
}

async fn eval_report(State(svc): State<Shared>, Query(q): Query<ReportQuery>) -> Result<Response, ApiError> {
    let format: ReportFormat =
        q.format.as_deref().unwrap_or("json").parse().map_err(|e: String| ApiError(ServiceError::BadRequest(e)))?;
    let body = blocking(move || svc.eval_report(format)).await?;
    let ctype = match format {
        ReportFormat::Csv => "text/csv; charset=utf-8",
        ReportFormat::Json => "application/json",
        ReportFormat::Markdown => "text/markdown; charset=utf-8",
    };
    Ok(([(header::CONTENT_TYPE, ctype)], body).into_response())
}

async fn add_record(State(svc): State<Shared>, Json(rec): Json<EvalRecord>) -> Result<Response, ApiError> {
    blocking(move || svc.add_eval_record(rec)).await?;
    Ok(StatusCode::CREATED.into_response())
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/advance", post(advance))
        .route("/api/sessions/{id}/events", get(events))
        .route("/api/sessions/{id}/events/stream", get(stream_events))
        .route("/api/sessions/{id}/artifacts/{name}", get(artifact))
        .route("/api/eval/report", get(eval_report))
        .route("/api/eval/records", post(add_record))
        .with_state(service)
}
