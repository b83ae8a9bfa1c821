use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use gensim_cli::service::{cors, router, AppState};
use gensim_core::creator::provider::MockProvider;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let req = req
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn get(app: &Router, uri: &str) -> (StatusCode, String) {
    call(app, Method::GET, uri, None).await
}

async fn post(app: &Router, uri: &str, body: &str) -> (StatusCode, String) {
    call(app, Method::POST, uri, Some(body)).await
}

fn app(dir: &Path) -> Router {
    router(AppState::open(dir).unwrap())
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[tokio::test]
async fn read_endpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    assert_eq!(
        get(&app, "/healthz").await,
        (StatusCode::OK, r#"{"status":"ok"}"#.into())
    );

    let (s, body) = get(&app, "/tasks").await;
    assert_eq!(s, StatusCode::OK);
    let tasks: Vec<Value> = serde_json::from_str(&body).unwrap();
    assert_eq!(tasks.len(), 10);
    assert!(tasks.iter().all(|t| t["verdict"] == "pending"));

    let (s, body) = get(&app, "/tasks/build-car").await;
    assert_eq!(s, StatusCode::OK);
    let t: Value = serde_json::from_str(&body).unwrap();
    assert!(t["dsl_source"].as_str().unwrap().starts_with("task \"build-car\""));

    let (s, svg) = get(&app, "/tasks/build-car/scene.svg?seed=3").await;
    assert_eq!(s, StatusCode::OK);
    assert!(svg.starts_with("<svg"));

    let (s, body) = get(&app, "/library/map").await;
    assert_eq!(s, StatusCode::OK);
    let m: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(m["points"].as_array().unwrap().len(), 10);

    assert_eq!(get(&app, "/metrics").await, (StatusCode::OK, "null".into()));
}

#[tokio::test]
async fn unknown_task_is_404() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    for uri in [
        "/tasks/nope",
        "/tasks/nope/scene.svg?seed=1",
        "/tasks/nope/replay?seed=1",
    ] {
        let (s, body) = get(&app, uri).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert!(body.contains("nope"));
    }
}

#[tokio::test]
async fn replay_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let (s, body) = get(&app, "/tasks/put-block-in-bowl/replay?seed=7").await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["success"], true);
    let frames = v["frames"].as_array().unwrap();
    assert!(frames.len() >= 2);
    assert!(frames[0]["annotation"].is_null());
    let rewards: Vec<f64> = frames[1..]
        .iter()
        .map(|f| f["annotation"]["reward_after"].as_f64().unwrap())
        .collect();
    assert!(rewards.windows(2).all(|w| w[0] <= w[1]), "{rewards:?}");
    assert!((rewards.last().unwrap() - 1.0).abs() < 1e-9);
    for (i, f) in frames.iter().enumerate() {
        assert_eq!(f["step"], i);
        assert_eq!(f["scene"]["seed"], 7);
    }
}

#[tokio::test]
async fn replay_is_identical_across_restarts() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, a) = get(&app(tmp.path()), "/tasks/multicolor-block-bridge/replay?seed=7").await;
    let (_, b) = get(&app(tmp.path()), "/tasks/multicolor-block-bridge/replay?seed=7").await;
    assert_eq!(a, b);
    let (_, c) = get(&app(tmp.path()), "/tasks/multicolor-block-bridge/replay?seed=8").await;
    assert_ne!(a, c);
}

#[tokio::test]
async fn verdict_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let (s, body) = post(
        &app,
        "/tasks/build-car/verdict",
        r#"{"accept":false,"reviewer":"r1","seconds":9.25}"#,
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{body}");
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["verdict"], "rejected");
    assert_eq!(v["human_verdict"]["seconds"], 9.25);
    assert!(v["human_verdict"]["recorded_at"].is_string());

    let (_, body) = get(&app, "/tasks").await;
    let tasks: Vec<Value> = serde_json::from_str(&body).unwrap();
    let car = tasks.iter().find(|t| t["name"] == "build-car").unwrap();
    assert_eq!(car["verdict"], "rejected");

    // survives a restart
    let (_, body) = get(&self::app(tmp.path()), "/tasks/build-car").await;
    let t: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(t["verdict"], "rejected");
    assert_eq!(t["human_verdict"]["reviewer"], "r1");
}

#[tokio::test]
async fn verdict_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let good = r#"{"accept":true,"reviewer":"r1","seconds":3}"#;
    assert_eq!(post(&app, "/tasks/nope/verdict", good).await.0, StatusCode::CONFLICT);
    for bad in [
        "",
        "not json",
        "{}",
        r#"{"accept":"yes","reviewer":"r1","seconds":3}"#,
        r#"{"accept":true,"reviewer":"r1"}"#,
        r#"{"accept":true,"reviewer":"r1","seconds":-2}"#,
        r#"{"accept":true,"reviewer":"","seconds":2}"#,
        r#"{"accept":true,"reviewer":"r1","seconds":2,"extra":1}"#,
    ] {
        let (s, body) = post(&app, "/tasks/build-car/verdict", bad).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{bad}");
        assert!(serde_json::from_str::<Value>(&body).unwrap()["error"].is_string());
    }
}

#[tokio::test]
async fn only_the_verdict_endpoint_writes() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let before = dir_bytes(tmp.path());
    for uri in [
        "/healthz",
        "/tasks",
        "/tasks/build-car",
        "/tasks/build-car/scene.svg?seed=2",
        "/tasks/build-car/replay?seed=2",
        "/tasks/nope",
        "/library/map",
        "/metrics",
    ] {
        get(&app, uri).await;
    }
    post(
        &app,
        "/tasks/nope/verdict",
        r#"{"accept":true,"reviewer":"r","seconds":1}"#,
    )
    .await;
    post(&app, "/tasks/build-car/verdict", r#"{"accept":true}"#).await;
    for (m, uri) in [
        (Method::POST, "/tasks"),
        (Method::DELETE, "/tasks/build-car"),
        (Method::PUT, "/tasks/build-car"),
    ] {
        let (s, _) = call(&app, m, uri, Some("{}")).await;
        assert_eq!(s, StatusCode::METHOD_NOT_ALLOWED, "{uri}");
    }
    assert_eq!(dir_bytes(tmp.path()), before);

    post(
        &app,
        "/tasks/build-car/verdict",
        r#"{"accept":true,"reviewer":"r","seconds":1}"#,
    )
    .await;
    let after = dir_bytes(tmp.path());
    let changed: Vec<&String> = after.keys().filter(|k| before.get(*k) != after.get(*k)).collect();
    assert_eq!(changed, vec!["index.json"]);
}

#[tokio::test]
async fn metrics_reports_the_last_generate() {
    let tmp = tempfile::tempdir().unwrap();
    let latest = json!({
        "source": "generate",
        "mode": "exploratory",
        "metrics": {"n_tasks": 10, "syntax_rate": 0.8, "runtime_rate": 0.7, "completed_rate": 0.7}
    });
    let app = app(tmp.path());
    fs::write(tmp.path().join("metrics.json"), latest.to_string()).unwrap();
    let (s, body) = get(&app, "/metrics").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap(), latest);
}

#[tokio::test]
async fn cors_allows_only_configured_origins() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path()).layer(cors(&["http://localhost:5173".into()]).unwrap());
    let preflight = |origin: &str| {
        Request::builder()
            .method(Method::OPTIONS)
            .uri("/tasks/build-car/verdict")
            .header(header::ORIGIN, origin)
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
            .body(Body::empty())
            .unwrap()
    };
    let ok = app.clone().oneshot(preflight("http://localhost:5173")).await.unwrap();
    assert_eq!(
        ok.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN],
        "http://localhost:5173"
    );
    let other = app.clone().oneshot(preflight("http://evil.example")).await.unwrap();
    assert!(other.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none());
}

fn mock_app(dir: &Path) -> Router {
    let transcripts = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/transcripts");
    let mock = MockProvider::from_dir(transcripts).unwrap();
    router(AppState::open(dir).unwrap().with_provider(Arc::new(mock)))
}

async fn wait_for_job(app: &Router, id: u64) -> Value {
    for _ in 0..600 {
        let (s, body) = get(app, &format!("/jobs/{id}")).await;
        assert_eq!(s, StatusCode::OK);
        let v: Value = serde_json::from_str(&body).unwrap();
        if v["state"] != "running" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} never finished");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bench_jobs_run_in_the_background_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let app = mock_app(tmp.path());
    let before = dir_bytes(tmp.path());
    let (s, body) = post(&app, "/jobs", "{}").await;
    assert_eq!(s, StatusCode::ACCEPTED, "{body}");
    let job: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(job["targets"].as_array().unwrap().len(), 10);
    let done = wait_for_job(&app, job["id"].as_u64().unwrap()).await;
    assert_eq!(done["state"], "done", "{done}");
    let m = &done["result"]["metrics"];
    assert_eq!(
        (m["n_tasks"].as_u64(), m["syntax_rate"].as_f64()),
        (Some(30), Some(0.8))
    );
    assert_eq!(m["completed_rate"], 0.7);
    assert_eq!(dir_bytes(tmp.path()), before);

    let (_, list) = get(&app, "/jobs").await;
    assert_eq!(
        serde_json::from_str::<Value>(&list).unwrap().as_array().unwrap().len(),
        1
    );
    assert_eq!(get(&app, "/jobs/9").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn job_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        post(&app(tmp.path()), "/jobs", "{}").await.0,
        StatusCode::SERVICE_UNAVAILABLE
    );
    let app = mock_app(tmp.path());
    for bad in [
        "nope",
        r#"{"trials":0}"#,
        r#"{"targets":[""]}"#,
        r#"{"targets":"x"}"#,
        r#"{"mode":"exploratory"}"#,
    ] {
        assert_eq!(
            post(&app, "/jobs", bad).await.0,
            StatusCode::UNPROCESSABLE_ENTITY,
            "{bad}"
        );
    }
}
