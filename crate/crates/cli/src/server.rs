//! HTTP service: start episodes, stream their records as server-sent events,
//! and accept a human player's turns.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, SyncSender};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use orgsim_core::agents::CommDecision;
use orgsim_core::config::ExperimentConfig;
use orgsim_core::orchestrator::{
    run_episode, EpisodeConfig, EpisodeIo, HumanPort, HumanTurn, Record, TurnPhase,
};
use orgsim_core::world::{Action, AgentId};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::watch;

use crate::commands::{timestamp, Workspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pending,
    Running,
    AwaitingHuman,
    Done,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Done | RunStatus::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    /// The trajectory header.
    Start,
    Message,
    Action,
    Election,
    Progress,
    Warning,
    AwaitingHuman,
    /// Running totals after each step, and the trajectory footer at the end.
    Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFrame {
    pub run_id: String,
    pub seq: u64,
    pub kind: FrameKind,
    pub payload: Value,
}

impl EventFrame {
    /// The trajectory record this frame carries, if any.
    pub fn record(&self) -> Option<Record> {
        match self.kind {
            FrameKind::AwaitingHuman => None,
            _ => serde_json::from_value(self.payload.clone()).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: EpisodeConfig,
    pub status: RunStatus,
    pub frames: u64,
    #[serde(default)]
    pub artifacts: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

enum HumanReply {
    Message(CommDecision, Option<AgentId>),
    Action(Action),
}

struct PendingTurn {
    turn_id: u64,
    turn: HumanTurn,
    reply: SyncSender<HumanReply>,
}

struct RunState {
    status: RunStatus,
    frames: Vec<EventFrame>,
    pending: Option<PendingTurn>,
    turns: u64,
    artifacts: Vec<PathBuf>,
    error: Option<String>,
}

pub struct Run {
    id: String,
    config: EpisodeConfig,
    state: Mutex<RunState>,
    changed: watch::Sender<u64>,
}

impl Run {
    fn new(id: String, config: EpisodeConfig) -> Self {
        Run {
            id,
            config,
            state: Mutex::new(RunState {
                status: RunStatus::Pending,
                frames: Vec::new(),
                pending: None,
                turns: 0,
                artifacts: Vec::new(),
                error: None,
            }),
            changed: watch::Sender::new(0),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, RunState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn notify(&self) {
        self.changed.send_modify(|v| *v += 1);
    }

    fn push(state: &mut RunState, id: &str, kind: FrameKind, payload: Value) {
        let seq = state.frames.len() as u64;
        state.frames.push(EventFrame {
            run_id: id.to_string(),
            seq,
            kind,
            payload,
        });
    }

    fn emit(&self, kind: FrameKind, payload: Value) {
        Self::push(&mut self.lock(), &self.id, kind, payload);
        self.notify();
    }

    fn set_status(&self, status: RunStatus) {
        self.lock().status = status;
        self.notify();
    }

    pub fn manifest(&self) -> RunManifest {
        let s = self.lock();
        RunManifest {
            run_id: self.id.clone(),
            config: self.config.clone(),
            status: s.status,
            frames: s.frames.len() as u64,
            artifacts: s.artifacts.clone(),
            error: s.error.clone(),
        }
    }

    /// Publish a human turn and block until it is answered or times out.
    fn await_human(&self, turn: &HumanTurn) -> Option<HumanReply> {
        let (tx, rx) = sync_channel(1);
        let turn_id = {
            let mut s = self.lock();
            s.turns += 1;
            let turn_id = s.turns;
            let mut payload = serde_json::to_value(turn).expect("turns serialize");
            payload["turn_id"] = json!(turn_id);
            Self::push(&mut s, &self.id, FrameKind::AwaitingHuman, payload);
            s.pending = Some(PendingTurn {
                turn_id,
                turn: turn.clone(),
                reply: tx,
            });
            s.status = RunStatus::AwaitingHuman;
            turn_id
        };
        self.notify();
        let reply = match turn.timeout {
            Some(d) => rx.recv_timeout(d).ok(),
            None => rx.recv().ok(),
        };
        let mut s = self.lock();
        if s.pending.as_ref().is_some_and(|p| p.turn_id == turn_id) {
            s.pending = None;
        }
        s.status = RunStatus::Running;
        drop(s);
        self.notify();
        reply
    }
}

struct ServiceHuman(Arc<Run>);

impl HumanPort for ServiceHuman {
    fn comm_turn(&mut self, turn: &HumanTurn) -> Option<CommDecision> {
        match self.0.await_human(turn)? {
            HumanReply::Message(d, _) => Some(d),
            HumanReply::Action(_) => None,
        }
    }

    fn election_turn(&mut self, turn: &HumanTurn) -> Option<(CommDecision, Option<AgentId>)> {
        match self.0.await_human(turn)? {
            HumanReply::Message(d, v) => Some((d, v)),
            HumanReply::Action(_) => None,
        }
    }

    fn action_turn(&mut self, turn: &HumanTurn) -> Option<Action> {
        match self.0.await_human(turn)? {
            HumanReply::Action(a) => Some(a),
            HumanReply::Message(..) => None,
        }
    }
}

fn frame_kind(r: &Record) -> FrameKind {
    match r {
        Record::Header(_) => FrameKind::Start,
        Record::Comm(_) => FrameKind::Message,
        Record::Action(_) => FrameKind::Action,
        Record::Election(_) => FrameKind::Election,
        Record::Progress(_) => FrameKind::Progress,
        Record::Warning(_) => FrameKind::Warning,
        Record::Footer(_) => FrameKind::Metrics,
    }
}

struct Shared {
    base: ExperimentConfig,
    ws: Workspace,
    out_dir: PathBuf,
    runs: RwLock<BTreeMap<String, Arc<Run>>>,
    next_id: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(ws: Workspace, out_dir: PathBuf) -> Self {
        AppState(Arc::new(Shared {
            base: ws.config.clone(),
            ws,
            out_dir,
            runs: RwLock::new(BTreeMap::new()),
            next_id: AtomicU64::new(1),
        }))
    }

    fn run(&self, id: &str) -> Result<Arc<Run>, ApiError> {
        self.0
            .runs
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown run `{id}`")))
    }
}

fn run_dir(out_dir: &Path, id: &str) -> PathBuf {
    out_dir.join("runs").join(id)
}

/// Episode body for one run, on its own thread.
fn execute(shared: Arc<Shared>, run: Arc<Run>) {
    run.set_status(RunStatus::Running);
    let mut tokens = 0u64;
    let obs_run = run.clone();
    let mut observer = move |r: &Record| {
        obs_run.emit(frame_kind(r), serde_json::to_value(r).expect("records serialize"));
        match r {
            Record::Comm(c) => tokens += c.messages.iter().map(|m| u64::from(m.token_count)).sum::<u64>(),
            Record::Progress(p) => {
                obs_run.emit(
                    FrameKind::Metrics,
                    json!({
                        "type": "running",
                        "step": p.step,
                        "satisfied": p.satisfied,
                        "required": p.required,
                        "total_tokens": tokens,
                        "avg_tokens_per_step": tokens as f64 / f64::from(p.step.max(1)),
                    }),
                );
            }
            _ => {}
        }
    };
    let mut human = ServiceHuman(run.clone());
    let has_human = run.config.team.iter().any(|p| p.is_human);
    let io = EpisodeIo {
        human: if has_human { Some(&mut human) } else { None },
        observer: Some(&mut observer),
    };
    let result = run_episode(shared.ws.context(), &run.config, io);
    let outcome = result
        .map_err(|e| e.to_string())
        .and_then(|t| t.write_to(&run_dir(&shared.out_dir, &run.id), &timestamp()).map_err(|e| e.to_string()));
    let mut s = run.lock();
    match outcome {
        Ok(path) => {
            s.artifacts.push(path);
            s.status = RunStatus::Done;
        }
        Err(e) => {
            tracing::error!(run = %run.id, "run failed: {e}");
            s.error = Some(e);
            s.status = RunStatus::Failed;
        }
    }
    drop(s);
    run.notify();
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: json!({ "error": message.into() }),
        }
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: json!({
                "error": "invalid payload",
                "fields": [{ "field": field.into(), "reason": reason.into() }],
            }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// Deserialize with the failing field path in the error.
fn decode<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "body".to_string() } else { path };
        ApiError::invalid(field, e.inner().to_string())
    })
}

async fn create_run(State(app): State<AppState>, body: axum::body::Bytes) -> Result<(StatusCode, Json<RunManifest>), ApiError> {
    let config: EpisodeConfig = decode(&body)?;
    let mut check = app.0.base.clone();
    check.episode = config.clone();
    check.batch = None;
    if let Err(e) = check.validate(false) {
        let field = e.key().map(|k| k.trim_start_matches("episode.").to_string()).unwrap_or_else(|| "config".into());
        return Err(ApiError::invalid(field, e.to_string()));
    }
    let n = app.0.next_id.fetch_add(1, Ordering::SeqCst);
    let id = format!("run-{n:04}");
    let run = Arc::new(Run::new(id.clone(), config));
    app.0.runs.write().unwrap_or_else(|e| e.into_inner()).insert(id.clone(), run.clone());
    let shared = app.0.clone();
    let worker = run.clone();
    std::thread::Builder::new()
        .name(id)
        .spawn(move || execute(shared, worker))
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok((StatusCode::CREATED, Json(run.manifest())))
}

async fn get_run(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<RunManifest>, ApiError> {
    Ok(Json(app.run(&id)?.manifest()))
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    from: Option<u64>,
}

/// Frames from `start` on; ends once the run is finished and drained.
pub fn frame_stream(run: Arc<Run>, start: u64) -> impl Stream<Item = EventFrame> {
    let rx = run.changed.subscribe();
    stream::unfold((run, rx, start as usize), |(run, mut rx, cursor)| async move {
        loop {
            rx.borrow_and_update();
            let (batch, finished) = {
                let s = run.lock();
                (s.frames.get(cursor..).unwrap_or_default().to_vec(), s.status.is_terminal())
            };
            if !batch.is_empty() {
                let next = cursor + batch.len();
                return Some((stream::iter(batch), (run, rx, next)));
            }
            if finished {
                return None;
            }
            if rx.changed().await.is_err() {
                return None;
            }
        }
    })
    .flatten()
}

async fn events(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let run = app.run(&id)?;
    let resume = match headers.get("last-event-id") {
        Some(v) => {
            let last: u64 = v
                .to_str()
                .ok()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| ApiError::invalid("Last-Event-ID", "must be a frame sequence number"))?;
            Some(last + 1)
        }
        None => None,
    };
    let start = resume.or(q.from).unwrap_or(0);
    let frames = frame_stream(run, start).map(|f| {
        Ok(Event::default()
            .id(f.seq.to_string())
            .event(serde_json::to_value(f.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
            .data(serde_json::to_string(&f).expect("frames serialize")))
    });
    Ok(Sse::new(frames).keep_alive(KeepAlive::default()))
}

#[derive(Debug, Deserialize)]
struct MessageBody {
    #[serde(flatten)]
    decision: CommDecision,
    #[serde(default)]
    vote: Option<AgentId>,
    /// Echo of the awaited turn; guards against answering a later turn twice.
    #[serde(default)]
    turn_id: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionBody {
    action: String,
    #[serde(default)]
    turn_id: Option<u64>,
}

/// Take the pending turn if `accept` approves it; at most one submission wins.
fn submit(
    run: &Run,
    turn_id: Option<u64>,
    accept: impl FnOnce(&HumanTurn) -> Result<HumanReply, ApiError>,
) -> Result<Json<Value>, ApiError> {
    let mut s = run.lock();
    if s.status != RunStatus::AwaitingHuman {
        return Err(ApiError::conflict(format!("run is {:?}, not awaiting human input", s.status)));
    }
    let pending = s.pending.as_ref().ok_or_else(|| ApiError::conflict("no open human turn"))?;
    if turn_id.is_some_and(|t| t != pending.turn_id) {
        return Err(ApiError::conflict(format!("turn {} is open, not {}", pending.turn_id, turn_id.unwrap_or_default())));
    }
    let reply = accept(&pending.turn)?;
    let pending = s.pending.take().expect("checked above");
    s.status = RunStatus::Running;
    drop(s);
    run.notify();
    pending
        .reply
        .send(reply)
        .map_err(|_| ApiError::conflict("the turn closed before the submission arrived"))?;
    Ok(Json(json!({ "accepted": true, "turn_id": pending.turn_id })))
}

async fn human_message(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: axum::body::Bytes,
) -> Result<Json<Value>, ApiError> {
    let run = app.run(&id)?;
    let body: MessageBody = decode(&body)?;
    submit(&run, body.turn_id, |turn| {
        if turn.phase == TurnPhase::Act {
            return Err(ApiError::conflict("the open turn is an action turn"));
        }
        turn.check_decision(&body.decision).map_err(|e| ApiError::invalid("decision", e))?;
        if let Some(v) = body.vote {
            if turn.phase != TurnPhase::Elect {
                return Err(ApiError::invalid("vote", "votes are only accepted during an election turn"));
            }
            if !turn.roster.contains(&v) {
                return Err(ApiError::invalid("vote", format!("Agent_{v} is not on the team")));
            }
        }
        Ok(HumanReply::Message(body.decision, body.vote))
    })
}

async fn human_action(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: axum::body::Bytes,
) -> Result<Json<Value>, ApiError> {
    let run = app.run(&id)?;
    let body: ActionBody = decode(&body)?;
    submit(&run, body.turn_id, |turn| {
        if turn.phase != TurnPhase::Act {
            return Err(ApiError::conflict("the open turn is a communication turn"));
        }
        let action = turn.check_action(&body.action).map_err(|e| ApiError::invalid("action", e))?;
        Ok(HumanReply::Action(action))
    })
}

async fn scenarios(State(app): State<AppState>) -> Json<Value> {
    let catalog = &app.0.ws.catalog;
    let list: Vec<Value> = catalog
        .names()
        .iter()
        .filter_map(|n| catalog.get(n).ok())
        .map(|s| {
            json!({
                "name": s.name,
                "description": s.description,
                "rooms": s.rooms,
                "agent_count": s.agent_count,
            })
        })
        .collect();
    Json(Value::Array(list))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/runs", post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/events", get(events))
        .route("/runs/{id}/human/message", post(human_message))
        .route("/runs/{id}/human/action", post(human_action))
        .route("/scenarios", get(scenarios))
        .with_state(state)
}

pub async fn serve(ws: Workspace, out_dir: PathBuf, host: &str, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    tracing::warn!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(ws, out_dir)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
