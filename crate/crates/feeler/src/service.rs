//! HTTP labeling and what-if service.
//!
//! `--dir` is either one experiment directory (served under its directory
//! name) or a directory whose subdirectories are experiments. Sessions live
//! in memory; every accepted answer is persisted immediately under the
//! experiment lock, to `live/round-<l>.csv` for ratings and
//! `live/votes.json` for comparisons.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime};

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use feeler_core::preference::CandidateSet;
use feeler_core::proactive::{self, RatingRecord};
use feeler_core::{seed, DesignVector, GpPosterior, PreferenceModel, Predictor};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::PipelineError;
use crate::pipeline::{Experiment, LiveVote};
use crate::render::{render, RenderSpec};
use crate::store::{self, LockGuard};

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    fn invalid(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: Some(field.to_string()),
            ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        use feeler_core::design_space::ValidationError;
        match &e {
            PipelineError::NotAnExperiment(_) => Self::not_found(e.to_string()),
            PipelineError::Locked(_) => Self::new(StatusCode::CONFLICT, "locked", e.to_string()),
            PipelineError::Ordering(_) | PipelineError::Holdout(_) => Self::conflict(e.to_string()),
            PipelineError::Config { field, message } => Self::invalid(field, message.clone()),
            PipelineError::Validation(ValidationError::Violations(v)) => {
                Self::invalid(v.first().map_or("vector", |v| v.variable.as_str()), e.to_string())
            }
            PipelineError::Validation(ValidationError::Dimension(_)) | PipelineError::Space(_) => {
                Self::invalid("vector", e.to_string())
            }
            _ => {
                warn!("internal error: {e}");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Parses a JSON body so that malformed input gets the same error shape as
/// every other failure.
fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let mut err = ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string());
        // serde reports missing or unknown fields by name; surface it
        let msg = e.to_string();
        if let Some(name) = msg.split('`').nth(1) {
            err.field = Some(name.to_string());
        }
        err
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Likert,
    Comparison,
}

#[derive(Debug, Clone, Serialize)]
pub struct Shown {
    pub id: usize,
    pub vector: DesignVector,
    pub render: RenderSpec,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Task {
    Likert {
        task_id: String,
        solution_id: String,
        round: usize,
        vector: DesignVector,
        render: RenderSpec,
    },
    Comparison {
        task_id: String,
        pair: usize,
        left: Shown,
        right: Shown,
    },
}

impl Task {
    fn id(&self) -> &str {
        match self {
            Task::Likert { task_id, .. } | Task::Comparison { task_id, .. } => task_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Score { score: u8 },
    Winner { winner: usize },
}

struct Session {
    experiment: String,
    tasks: Vec<Task>,
    served: usize,
    answers: HashMap<String, Answer>,
}

#[derive(Clone)]
struct CachedModels {
    stamp: (Option<SystemTime>, Option<SystemTime>),
    stage1: Arc<GpPosterior>,
    stage2: Option<Arc<PreferenceModel>>,
}

#[derive(Clone)]
pub struct AppState {
    root: PathBuf,
    sessions: Arc<Mutex<HashMap<String, Session>>>,
    models: Arc<Mutex<HashMap<String, CachedModels>>>,
}

impl AppState {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            sessions: Arc::default(),
            models: Arc::default(),
        }
    }

    fn is_single(&self) -> bool {
        self.root.join(store::CONFIG).is_file()
    }

    fn single_name(&self) -> String {
        self.root
            .canonicalize()
            .unwrap_or_else(|_| self.root.clone())
            .file_name()
            .map_or_else(|| "experiment".into(), |n| n.to_string_lossy().into_owned())
    }

    /// Experiment ids currently under the root.
    pub fn experiment_ids(&self) -> Vec<String> {
        if self.is_single() {
            return vec![self.single_name()];
        }
        let mut ids: Vec<String> = std::fs::read_dir(&self.root)
            .into_iter()
            .flatten()
            .flatten()
            .filter(|e| e.path().join(store::CONFIG).is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        ids
    }

    fn open(&self, id: &str) -> Result<Experiment, ApiError> {
        let unknown = || ApiError::not_found(format!("unknown experiment '{id}'"));
        if self.is_single() {
            return if id == self.single_name() {
                Ok(Experiment::open(&self.root)?)
            } else {
                Err(unknown())
            };
        }
        if id.is_empty() || id.starts_with('.') || id.contains(['/', '\\']) {
            return Err(unknown());
        }
        Experiment::open(&self.root.join(id)).map_err(|_| unknown())
    }

    fn models(&self, id: &str, exp: &Experiment) -> Result<CachedModels, ApiError> {
        let mtime = |name: &str| std::fs::metadata(exp.store().path(name)).and_then(|m| m.modified()).ok();
        let stamp = (mtime(store::STAGE1), mtime(store::STAGE2));
        if stamp.0.is_none() {
            return Err(ApiError::conflict("no stage-1 model yet; label round 0 first"));
        }
        if let Some(c) = self.models.lock().unwrap().get(id) {
            if c.stamp == stamp {
                return Ok(c.clone());
            }
        }
        let stage2 = match stamp.1 {
            Some(_) => Some(Arc::new(exp.load_stage2()?)),
            None => None,
        };
        let cached = CachedModels {
            stamp,
            stage1: Arc::new(exp.load_stage1()?),
            stage2,
        };
        self.models.lock().unwrap().insert(id.to_string(), cached.clone());
        Ok(cached)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/experiments", get(list_experiments))
        .route("/experiments/{id}/status", get(status))
        .route("/experiments/{id}/reports", get(reports))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(next_task))
        .route("/sessions/{id}/submit", post(submit))
        .route("/whatif", post(what_if))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(root: &Path, port: u16) -> std::io::Result<()> {
    let state = AppState::new(root);
    info!("serving experiments {:?} from {}", state.experiment_ids(), root.display());
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn list_experiments(State(state): State<AppState>) -> Json<Value> {
    Json(serde_json::json!({ "experiments": state.experiment_ids() }))
}

async fn status(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Value> {
    let exp = state.open(&id)?;
    let s = exp.status()?;
    Ok(Json(serde_json::to_value(s).expect("status serializes")))
}

async fn reports(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Value> {
    let exp = state.open(&id)?;
    let mut out = serde_json::Map::new();
    for name in exp.status()?.reports {
        let value: Value = store::read_json(&exp.store().report_path(&name))?;
        out.insert(name, value);
    }
    Ok(Json(Value::Object(out)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    experiment: String,
    phase: Option<Phase>,
}

#[derive(Debug, Serialize)]
struct Created {
    session_id: String,
    experiment: String,
    phase: Phase,
    tasks: usize,
}

fn new_session_id() -> String {
    let bytes: [u8; 16] = rand::rng().random();
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn likert_tasks(exp: &Experiment, session_seed: u64) -> Result<Vec<Task>, ApiError> {
    let plan = exp
        .pending_plan()?
        .ok_or_else(|| ApiError::conflict("no round is waiting for ratings"))?;
    let ids = plan.solution_ids();
    let mut rng = seed::rng(session_seed);
    let queue = proactive::presentation_queue(plan.batch.len(), exp.config().duplicate_rate, &mut rng);
    Ok(queue
        .into_iter()
        .enumerate()
        .map(|(t, s)| Task::Likert {
            task_id: format!("t{t}"),
            solution_id: ids[s].clone(),
            round: plan.round,
            vector: plan.batch[s].clone(),
            render: render(exp.space(), &plan.batch[s]),
        })
        .collect())
}

fn comparison_tasks(exp: &Experiment, c: &CandidateSet, session_seed: u64) -> Vec<Task> {
    let mut rng = seed::rng(session_seed);
    let mut order: Vec<usize> = (0..c.pairs.len()).collect();
    order.shuffle(&mut rng);
    let shown = |i: usize| Shown {
        id: i,
        vector: c.vectors[i].clone(),
        render: render(exp.space(), &c.vectors[i]),
    };
    order
        .into_iter()
        .enumerate()
        .map(|(t, m)| {
            let (i, j) = c.pairs[m];
            let (l, r) = if rng.random::<bool>() { (j, i) } else { (i, j) };
            Task::Comparison {
                task_id: format!("t{t}"),
                pair: m,
                left: shown(l),
                right: shown(r),
            }
        })
        .collect()
}

async fn create_session(State(state): State<AppState>, body: axum::body::Bytes) -> ApiResult<Created> {
    let req: CreateSession = parse(&body)?;
    let exp = state.open(&req.experiment)?;
    let phase = match req.phase {
        Some(p) => p,
        None if exp.pending_plan()?.is_some() => Phase::Likert,
        None => Phase::Comparison,
    };
    let session_id = new_session_id();
    let session_seed = seed::child_seed(exp.config().master_seed, &format!("session/{session_id}"));
    let tasks = match phase {
        Phase::Likert => likert_tasks(&exp, session_seed)?,
        Phase::Comparison => {
            if exp.store().exists(store::STAGE2) {
                return Err(ApiError::conflict("the comparison model is already fit; nothing left to label"));
            }
            let c = with_lock(|| exp.prepare_candidates())?;
            comparison_tasks(&exp, &c, session_seed)
        }
    };
    let created = Created {
        session_id: session_id.clone(),
        experiment: req.experiment.clone(),
        phase,
        tasks: tasks.len(),
    };
    state.sessions.lock().unwrap().insert(
        session_id,
        Session {
            experiment: req.experiment,
            tasks,
            served: 0,
            answers: HashMap::new(),
        },
    );
    Ok(Json(created))
}

#[derive(Debug, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
enum Next {
    Task {
        index: usize,
        total: usize,
        task: Box<Task>,
    },
    Done {
        total: usize,
    },
}

async fn next_task(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Next> {
    let mut sessions = state.sessions.lock().unwrap();
    let s = sessions
        .get_mut(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown session '{id}'")))?;
    let total = s.tasks.len();
    // a served but unanswered task is served again rather than skipped
    if let Some(t) = s.tasks[..s.served].iter().position(|t| !s.answers.contains_key(t.id())) {
        return Ok(Json(Next::Task {
            index: t,
            total,
            task: Box::new(s.tasks[t].clone()),
        }));
    }
    if s.served == total {
        return Ok(Json(Next::Done { total }));
    }
    s.served += 1;
    Ok(Json(Next::Task {
        index: s.served - 1,
        total,
        task: Box::new(s.tasks[s.served - 1].clone()),
    }))
}

#[derive(Debug, Deserialize)]
struct Submit {
    task_id: String,
    #[serde(flatten)]
    answer: Answer,
}

#[derive(Debug, Serialize)]
struct Ack {
    task_id: String,
    /// `false` when the same answer had already been recorded.
    recorded: bool,
}

/// Runs `f` under the experiment lock, waiting briefly if a CLI command
/// holds it.
fn with_lock<T>(f: impl Fn() -> Result<T, PipelineError>) -> Result<T, ApiError> {
    let mut tries = 0;
    loop {
        match f() {
            Err(PipelineError::Locked(_)) if tries < 40 => {
                tries += 1;
                std::thread::sleep(Duration::from_millis(25));
            }
            other => return other.map_err(ApiError::from),
        }
    }
}

fn persist_rating(exp: &Experiment, round: usize, record: RatingRecord) -> Result<(), PipelineError> {
    let _lock: LockGuard = exp.store().lock()?;
    let path = exp.store().live_ratings_path(round);
    let mut records = if path.exists() {
        let f = std::fs::File::open(&path).map_err(|e| PipelineError::io(&path, e))?;
        proactive::read_ratings_csv(f).map_err(|e| PipelineError::artifact(&path, e.to_string()))?
    } else {
        Vec::new()
    };
    records.push(record);
    let mut bytes = Vec::new();
    proactive::write_ratings_csv(&mut bytes, &records)?;
    store::write_atomic(&path, &bytes)
}

fn persist_vote(exp: &Experiment, vote: LiveVote) -> Result<(), PipelineError> {
    let _lock: LockGuard = exp.store().lock()?;
    let mut votes = exp.live_votes()?;
    votes.push(vote);
    store::write_json(&exp.store().live_votes_path(), &votes)
}

async fn submit(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: axum::body::Bytes,
) -> ApiResult<Ack> {
    let req: Submit = parse(&body)?;
    let (experiment, task, index) = {
        let sessions = state.sessions.lock().unwrap();
        let s = sessions
            .get(&id)
            .ok_or_else(|| ApiError::not_found(format!("unknown session '{id}'")))?;
        let index = s.tasks[..s.served]
            .iter()
            .position(|t| t.id() == req.task_id)
            .ok_or_else(|| ApiError::conflict(format!("task '{}' has not been served to this session", req.task_id)))?;
        if let Some(prev) = s.answers.get(&req.task_id) {
            return if *prev == req.answer {
                Ok(Json(Ack {
                    task_id: req.task_id,
                    recorded: false,
                }))
            } else {
                Err(ApiError::conflict(format!("task '{}' was already answered differently", req.task_id)))
            };
        }
        (s.experiment.clone(), s.tasks[index].clone(), index)
    };
    let exp = state.open(&experiment)?;
    match (&task, req.answer) {
        (Task::Likert { solution_id, round, .. }, Answer::Score { score }) => {
            if !(1..=5).contains(&score) {
                return Err(ApiError::invalid("score", format!("score must be 1..5, got {score}")));
            }
            let record = RatingRecord {
                rater_id: id.clone(),
                solution_id: solution_id.clone(),
                score,
                presentation_index: index as u32,
            };
            with_lock(|| persist_rating(&exp, *round, record.clone()))?;
        }
        (Task::Comparison { pair, left, right, .. }, Answer::Winner { winner }) => {
            if winner != left.id && winner != right.id {
                return Err(ApiError::invalid(
                    "winner",
                    format!("winner must be {} or {}, got {winner}", left.id, right.id),
                ));
            }
            let vote = LiveVote {
                session: id.clone(),
                pair: *pair,
                winner,
            };
            with_lock(|| persist_vote(&exp, vote.clone()))?;
        }
        (Task::Likert { .. }, Answer::Winner { .. }) => {
            return Err(ApiError::invalid("score", "a rating task needs a score"));
        }
        (Task::Comparison { .. }, Answer::Score { .. }) => {
            return Err(ApiError::invalid("winner", "a comparison task needs a winner"));
        }
    }
    let mut sessions = state.sessions.lock().unwrap();
    if let Some(s) = sessions.get_mut(&id) {
        s.answers.insert(req.task_id.clone(), req.answer);
    }
    Ok(Json(Ack {
        task_id: req.task_id,
        recorded: true,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WhatIf {
    experiment: String,
    vector: DesignVector,
}

#[derive(Debug, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Serialize)]
struct WhatIfResponse {
    stage1: Estimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage2: Option<Estimate>,
}

async fn what_if(State(state): State<AppState>, body: axum::body::Bytes) -> ApiResult<WhatIfResponse> {
    let req: WhatIf = parse(&body)?;
    let exp = state.open(&req.experiment)?;
    exp.space().validate(&req.vector).map_err(PipelineError::from)?;
    let u = exp.space().normalize(&req.vector).map_err(PipelineError::from)?;
    let models = state.models(&req.experiment, &exp)?;
    let estimate = |p: feeler_core::Prediction| Estimate {
        mean: p.mean,
        std: p.std(),
    };
    Ok(Json(WhatIfResponse {
        stage1: estimate(models.stage1.predict(&u)),
        stage2: models.stage2.as_ref().map(|m| estimate(m.predict(&u))),
    }))
}
