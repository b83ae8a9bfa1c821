use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

use gensim_core::creator::provider::Provider;
use gensim_core::creator::{run_goal_directed_eval, CreatorConfig, HELD_OUT_TASKS};
use gensim_core::dsl::parse_task;
use gensim_core::library::Library;
use gensim_core::world::build_scene;

use crate::cli::ProviderKind;
use crate::commands::{make_provider, open_library, LatestMetrics, METRICS_FILE};
use crate::replay::replay;
use crate::svg::render_scene_svg;

pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub library: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub cors_origins: Vec<String>,
    pub transcripts: PathBuf,
    pub provider: ProviderKind,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct Job {
    pub id: usize,
    pub state: JobState,
    pub targets: Vec<String>,
    pub trials: usize,
    pub result: Option<Value>,
    pub error: Option<String>,
}

#[derive(Clone)]
pub struct AppState {
    library: Arc<RwLock<Library>>,
    library_dir: PathBuf,
    provider: Option<Arc<dyn Provider>>,
    jobs: Arc<Mutex<Vec<Job>>>,
}

impl AppState {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        Ok(Self {
            library: Arc::new(RwLock::new(open_library(&dir)?)),
            library_dir: dir,
            provider: None,
            jobs: Arc::default(),
        })
    }

    /// Enables `/jobs`, which run goal-directed evaluations with `provider`.
    pub fn with_provider(mut self, provider: Arc<dyn Provider>) -> Self {
        self.provider = Some(provider);
        self
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn not_found(name: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("no task named `{name}`"))
}

#[derive(Deserialize)]
struct SeedQuery {
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictBody {
    accept: bool,
    reviewer: String,
    seconds: f64,
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn list_tasks(State(st): State<AppState>) -> Json<Value> {
    let lib = st.library.read().unwrap();
    let rows: Vec<Value> = lib
        .entries()
        .iter()
        .map(|e| {
            json!({
                "name": e.name,
                "description": e.description,
                "cluster_id": e.cluster_id,
                "verdict": e.verdict_status(),
                "stage": e.verify.stage,
            })
        })
        .collect();
    Json(Value::Array(rows))
}

async fn get_task(State(st): State<AppState>, Path(name): Path<String>) -> Result<Json<Value>, ApiError> {
    let lib = st.library.read().unwrap();
    let e = lib.get(&name).ok_or_else(|| not_found(&name))?;
    let mut v = serde_json::to_value(e).expect("entry serializes");
    v["verdict"] = json!(e.verdict_status());
    Ok(Json(v))
}

fn task_source(st: &AppState, name: &str) -> Result<String, ApiError> {
    let lib = st.library.read().unwrap();
    lib.get(name)
        .map(|e| e.dsl_source.clone())
        .ok_or_else(|| not_found(name))
}

fn unbuildable(diags: Vec<gensim_core::dsl::Diagnostic>) -> ApiError {
    let msg = diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ");
    ApiError(StatusCode::UNPROCESSABLE_ENTITY, msg)
}

async fn scene_svg(
    State(st): State<AppState>,
    Path(name): Path<String>,
    Query(q): Query<SeedQuery>,
) -> Result<Response, ApiError> {
    let src = task_source(&st, &name)?;
    let spec = parse_task(&src).map_err(unbuildable)?;
    let world = build_scene(&spec, q.seed).map_err(unbuildable)?;
    let svg = render_scene_svg(&world.snapshot());
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}

async fn task_replay(
    State(st): State<AppState>,
    Path(name): Path<String>,
    Query(q): Query<SeedQuery>,
) -> Result<Json<Value>, ApiError> {
    let src = task_source(&st, &name)?;
    let seed = q.seed;
    let result = tokio::task::spawn_blocking(move || {
        let spec = parse_task(&src)?;
        replay(&spec, seed)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let (ep, frames) = result.map_err(unbuildable)?;
    Ok(Json(json!({
        "task": ep.task,
        "seed": ep.seed,
        "outcome": ep.outcome,
        "success": ep.success,
        "final_reward": ep.final_reward,
        "frames": frames,
    })))
}

async fn post_verdict(
    State(st): State<AppState>,
    Path(name): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let v: VerdictBody =
        serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    if !(v.seconds.is_finite() && v.seconds >= 0.0) {
        return Err(ApiError(
            StatusCode::UNPROCESSABLE_ENTITY,
            "seconds must be a nonnegative number".into(),
        ));
    }
    if v.reviewer.trim().is_empty() {
        return Err(ApiError(
            StatusCode::UNPROCESSABLE_ENTITY,
            "reviewer must not be empty".into(),
        ));
    }
    let mut lib = st.library.write().unwrap();
    if lib.get(&name).is_none() {
        return Err(ApiError(
            StatusCode::CONFLICT,
            format!("no entry named `{name}` to record a verdict on"),
        ));
    }
    let e = lib
        .record_human_verdict(&name, v.accept, &v.reviewer, v.seconds)
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json(json!({
        "name": e.name,
        "verdict": e.verdict_status(),
        "human_verdict": e.human_verdict,
    })))
}

async fn library_map(State(st): State<AppState>) -> Json<Value> {
    let lib = st.library.read().unwrap();
    let proj = lib.project_2d().ok();
    Json(json!({
        "points": lib.map(),
        "variance": proj.as_ref().map(|p| p.variance),
        "total_variance": proj.as_ref().map(|p| p.total_variance),
        "degenerate": proj.as_ref().is_none_or(|p| p.degenerate),
    }))
}

/// The batch metrics written by the last `generate` run, or `null`.
async fn metrics(State(st): State<AppState>) -> Result<Json<Value>, ApiError> {
    let path = st.library_dir.join(METRICS_FILE);
    match std::fs::read(&path) {
        Ok(bytes) => {
            let m: LatestMetrics = serde_json::from_slice(&bytes)
                .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("{}: {e}", path.display())))?;
            Ok(Json(serde_json::to_value(m).unwrap()))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Json(Value::Null)),
        Err(e) => Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JobBody {
    #[serde(default)]
    targets: Vec<String>,
    #[serde(default = "default_trials")]
    trials: usize,
}

fn default_trials() -> usize {
    3
}

/// Starts a goal-directed evaluation in the background. The job reads its
/// own copy of the library from disk and writes nothing.
async fn start_job(State(st): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<Value>), ApiError> {
    let Some(provider) = st.provider.clone() else {
        return Err(ApiError(
            StatusCode::SERVICE_UNAVAILABLE,
            "no provider configured".into(),
        ));
    };
    let body: JobBody = if body.is_empty() {
        JobBody {
            targets: Vec::new(),
            trials: default_trials(),
        }
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?
    };
    if body.trials == 0 || body.targets.iter().any(|t| t.trim().is_empty()) {
        return Err(ApiError(
            StatusCode::UNPROCESSABLE_ENTITY,
            "need trials >= 1 and nonempty target names".into(),
        ));
    }
    let targets = if body.targets.is_empty() {
        HELD_OUT_TASKS.iter().map(|s| s.to_string()).collect()
    } else {
        body.targets
    };
    let job = {
        let mut jobs = st.jobs.lock().unwrap();
        let job = Job {
            id: jobs.len(),
            state: JobState::Running,
            targets,
            trials: body.trials,
            result: None,
            error: None,
        };
        jobs.push(job.clone());
        job
    };
    let (jobs, dir, id) = (st.jobs.clone(), st.library_dir.clone(), job.id);
    let (targets, trials) = (job.targets.clone(), job.trials);
    tokio::task::spawn_blocking(move || {
        let outcome = Library::open(&dir).map_err(anyhow::Error::from).and_then(|lib| {
            let eval = run_goal_directed_eval(&targets, trials, &lib, provider.as_ref(), &CreatorConfig::default())?;
            Ok(json!({
                "targets": eval.per_target.iter().map(|t| json!({"target": t.target, "metrics": t.metrics})).collect::<Vec<_>>(),
                "metrics": eval.metrics,
            }))
        });
        let mut jobs = jobs.lock().unwrap();
        let job = &mut jobs[id];
        match outcome {
            Ok(v) => {
                job.state = JobState::Done;
                job.result = Some(v);
            }
            Err(e) => {
                job.state = JobState::Failed;
                job.error = Some(format!("{e:#}"));
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(serde_json::to_value(job).unwrap())))
}

async fn get_job(State(st): State<AppState>, Path(id): Path<usize>) -> Result<Json<Value>, ApiError> {
    let jobs = st.jobs.lock().unwrap();
    let job = jobs
        .get(id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no job {id}")))?;
    Ok(Json(serde_json::to_value(job).unwrap()))
}

async fn list_jobs(State(st): State<AppState>) -> Json<Value> {
    Json(serde_json::to_value(&*st.jobs.lock().unwrap()).unwrap())
}

pub fn cors(origins: &[String]) -> Result<CorsLayer> {
    let origins = origins
        .iter()
        .map(|o| HeaderValue::from_str(o).with_context(|| format!("bad CORS origin {o:?}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorsLayer::new()
        .allow_origin(origins)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/tasks", get(list_tasks))
        .route("/tasks/{name}", get(get_task))
        .route("/tasks/{name}/scene.svg", get(scene_svg))
        .route("/tasks/{name}/replay", get(task_replay))
        .route("/tasks/{name}/verdict", post(post_verdict))
        .route("/library/map", get(library_map))
        .route("/metrics", get(metrics))
        .route("/jobs", get(list_jobs).post(start_job))
        .route("/jobs/{id}", get(get_job))
        .with_state(state)
}

pub fn app(config: &ServiceConfig) -> Result<Router> {
    let provider = make_provider(config.provider, &config.transcripts, None)?;
    let mut r = router(AppState::open(&config.library)?.with_provider(Arc::from(provider)));
    if let Some(dir) = &config.static_dir {
        r = r.fallback_service(ServeDir::new(dir));
    }
    Ok(r.layer(cors(&config.cors_origins)?))
}

pub fn serve_blocking(config: ServiceConfig) -> Result<()> {
    let app = app(&config)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(config.bind)
            .await
            .with_context(|| format!("binding {}", config.bind))?;
        log::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await?;
        Ok(())
    })
}
