use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chatnet_core::llm_gateway::{load_replay_script, Backend};
use chatnet_core::service::{Service, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn app() -> (TempDir, Router) {
    let dir = tempfile::tempdir().unwrap();
    for f in ["triangle.json", "traffic.csv"] {
        fs::copy(fixture(f), dir.path().join(f)).unwrap();
    }
    let script = load_replay_script(&fixture("capacity_replay.jsonl")).unwrap();
    let svc = Service::new(ServiceConfig::new(dir.path(), Backend::Replay { script, strict: true })).unwrap();
    (dir, chatnet_cli::router(Arc::new(svc)))
}

fn request_body() -> Value {
    json!({
        "task_text": "Plan the IP-layer capacity of the backbone at minimum cost and draw the IP and optical topology.",
        "state_text": "Three core routers.",
        "constraint_text": "Link utilization must stay at or below 80% from 9 AM to 5 PM.",
        "attachments": [
            {"name": "topology", "kind": "topology", "path": "triangle.json"},
            {"name": "traffic", "kind": "traffic", "path": "traffic.csv"}
        ]
    })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let builder = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => builder.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
        None => builder.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn create(app: &Router) -> String {
    let (status, body) = call(app, "POST", "/api/sessions", Some(request_body())).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    serde_json::from_str::<Value>(&body).unwrap()["id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn auto_session_over_http() {
    let (_dir, app) = app();
    let id = create(&app).await;
    let (status, body) = call(&app, "POST", &format!("/api/sessions/{id}/advance"), Some(json!({"command": "run_auto"}))).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let snap: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(snap["last_seq"], 10);
    assert_eq!(snap["outcome"]["total_cost"], 2.0);

    let (_, body) = call(&app, "GET", &format!("/api/sessions/{id}/events?after=7"), None).await;
    let events: Vec<Value> = serde_json::from_str(&body).unwrap();
    let seqs: Vec<u64> = events.iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, [8, 9, 10]);
    assert_eq!(events[2]["kind"], "outcome");

    let (status, svg) = call(&app, "GET", &format!("/api/sessions/{id}/artifacts/topology.svg"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(svg.contains("dashed: optical fiber"));
    let (status, plan) = call(&app, "GET", &format!("/api/sessions/{id}/artifacts/plan.json"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_str::<Value>(&plan).unwrap()["total_cost"], 2.0);
    let (status, report) = call(&app, "GET", &format!("/api/sessions/{id}/artifacts/report.md"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(report.contains("HI: 0"));
    let (status, _) = call(&app, "GET", &format!("/api/sessions/{id}/artifacts/missing.svg"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn checkpoint_approvals_edit_and_what_if() {
    let (_dir, app) = app();
    let id = create(&app).await;
    let advance = format!("/api/sessions/{id}/advance");
    let (status, _) = call(&app, "POST", &advance, Some(json!({"command": "approve_step", "step_id": 1}))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    call(&app, "POST", &advance, Some(json!({"command": "run_checkpoint"}))).await;
    call(&app, "POST", &advance, Some(json!({"command": "approve_step", "step_id": 1}))).await;
    let (status, body) = call(
        &app,
        "POST",
        &advance,
        Some(json!({"command": "edit", "edits": [{"step_id": 2, "args": {"u_max": 0.7}}]})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["hi_count"], 1);
    let (status, _) =
        call(&app, "POST", &advance, Some(json!({"command": "edit", "edits": [{"step_id": 2, "args": {"umax": 0.7}}]}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    call(&app, "POST", &advance, Some(json!({"command": "approve_step", "step_id": 2}))).await;
    let (_, body) = call(&app, "POST", &advance, Some(json!({"command": "approve_step", "step_id": 3}))).await;
    let snap: Value = serde_json::from_str(&body).unwrap();
    assert!(snap["plan"]["steps"].as_array().unwrap().iter().all(|s| s["status"] == "done"));
    assert_eq!(snap["outcome"]["total_cost"], 3.0);

    let (status, body) = call(
        &app,
        "POST",
        &advance,
        Some(json!({"command": "what_if", "action": {"type": "add_capacity", "ip_link_id": "L3", "extra_modules": 1}})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let snap: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(snap["hi_count"], 2);
    let c = &snap["what_ifs"][0]["outcome"]["comparison"];
    assert_eq!(c["old_cost"], 3.0);
    assert!(c["cost_delta"].is_number());

    let (status, _) = call(
        &app,
        "POST",
        &advance,
        Some(json!({"command": "what_if", "action": {"type": "add_capacity", "ip_link_id": "L9", "extra_modules": 1}})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bad_requests() {
    let (_dir, app) = app();
    let mut body = request_body();
    body["task_text"] = json!("");
    let (status, _) = call(&app, "POST", "/api/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let mut body = request_body();
    body["attachments"][1]["path"] = json!("../../etc/passwd");
    let (status, msg) = call(&app, "POST", "/api/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(msg.contains("attachment_missing"));
    let (status, _) = call(&app, "GET", "/api/sessions/does-not-exist", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/api/eval/report?format=pdf", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn eval_records_and_report() {
    let (_dir, app) = app();
    let (_, csv) = call(&app, "GET", "/api/eval/report?format=csv", None).await;
    assert_eq!(csv, "module,method,mean_score,mean_hi,n\n");
    let rec = json!({"module": "calculator", "method": "rag", "score": 0.6, "hi": 2, "task_id": "t1", "evaluator": "human"});
    let (status, _) = call(&app, "POST", "/api/eval/records", Some(rec.clone())).await;
    assert_eq!(status, StatusCode::CREATED);
    let mut off = rec;
    off["score"] = json!(0.5);
    let (status, _) = call(&app, "POST", "/api/eval/records", Some(off)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (_, body) = call(&app, "GET", "/api/eval/report?format=json", None).await;
    let report: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(report["cells"][0]["module"], "calculator");
    assert_eq!(report["cells"][0]["mean_score"], 0.6);
}

#[tokio::test]
async fn long_poll_and_stream() {
    let (_dir, app) = app();
    let id = create(&app).await;
    // Nothing new after seq 1: the long poll times out with an empty batch.
    let (_, body) = call(&app, "GET", &format!("/api/sessions/{id}/events?after=1&wait_ms=150"), None).await;
    assert_eq!(body, "[]");
    call(&app, "POST", &format!("/api/sessions/{id}/advance"), Some(json!({"command": "run_auto"}))).await;

    let req = Request::builder()
        .uri(format!("/api/sessions/{id}/events/stream"))
        .header("last-event-id", "7")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let mut body = resp.into_body();
    let mut text = String::new();
    while text.matches("\n\n").count() < 3 {
        let frame = tokio::time::timeout(Duration::from_secs(5), body.frame()).await.unwrap().unwrap().unwrap();
        if let Ok(data) = frame.into_data() {
            text.push_str(std::str::from_utf8(&data).unwrap());
        }
    }
    let ids: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix("id: ")).collect();
    assert_eq!(ids, ["8", "9", "10"]);
    assert!(text.contains("event: outcome"));
}
