//! File-backed session service: one append-only JSONL event log per session
//! under `data_dir/sessions/`, evaluation records in `data_dir`.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::capacity_solver::CostModel;
use crate::eval::{self, EvalRecord, ReportFormat, Rubric, SessionTally};
use crate::llm_gateway::{load_replay_script, Backend, Gateway, PromptStrategy};
use crate::net_model::Action;
use crate::pipeline::{
    resolve_attachment, AnalysisRequest, Engine, PipelineError, Plan, Session, SessionEvent, SessionMode, SessionOutcome,
    SessionState, StepEdit, TranscriptEntry, WhatIfRecord,
};
use crate::rag_store::VectorStore;
use crate::render::render_report;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("attachment missing: {0}")]
    AttachmentMissing(String),
    #[error("illegal transition: {0}")]
    IllegalTransition(String),
    #[error("corrupt event log: {0}")]
    CorruptLog(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl From<PipelineError> for ServiceError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::BadRequest(m) | PipelineError::Invariant(m) => ServiceError::BadRequest(m),
            PipelineError::NotFound(m) => ServiceError::NotFound(m),
            PipelineError::IllegalTransition(m) => ServiceError::IllegalTransition(m),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

impl From<eval::EvalError> for ServiceError {
    fn from(e: eval::EvalError) -> Self {
        match e {
            eval::EvalError::BadRecord(m) => ServiceError::BadRequest(m),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_u_max() -> f64 {
    0.8
}

/// Service settings. Credentials are never part of it: a remote backend
/// names the environment variable that holds its key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub data_dir: PathBuf,
    #[serde(default)]
    pub backend: Option<Backend>,
    /// JSONL replay script; used when `backend` is absent.
    #[serde(default)]
    pub replay_script: Option<PathBuf>,
    #[serde(default)]
    pub strategy: PromptStrategy,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    /// Documents ingested into the `default` retrieval store.
    #[serde(default)]
    pub rag_corpus_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>, backend: Backend) -> Self {
        ServiceConfig {
            listen: default_listen(),
            data_dir: data_dir.into(),
            backend: Some(backend),
            replay_script: None,
            strategy: PromptStrategy::default(),
            cost: CostModel::default(),
            u_max: default_u_max(),
            rag_corpus_dir: None,
        }
    }

    pub fn check(&self) -> Result<(), ServiceError> {
        if !(self.u_max > 0.0 && self.u_max <= 1.0) {
            return Err(ServiceError::Config(format!("u_max {} outside (0,1]", self.u_max)));
        }
        if self.backend.is_none() && self.replay_script.is_none() {
            return Err(ServiceError::Config("either `backend` or `replay_script` is required".into()));
        }
        fs::create_dir_all(self.data_dir.join("sessions"))
            .map_err(|e| ServiceError::Config(format!("data_dir {}: {e}", self.data_dir.display())))?;
        let probe = self.data_dir.join(".write-probe");
        fs::write(&probe, b"")
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| ServiceError::Config(format!("data_dir {} is not writable: {e}", self.data_dir.display())))
    }

    pub fn gateway(&self) -> Result<Gateway, ServiceError> {
        let backend = match (&self.replay_script, &self.backend) {
            (_, Some(b)) => b.clone(),
            (Some(path), None) => {
                Backend::Replay { script: load_replay_script(path).map_err(|e| ServiceError::Config(e.to_string()))?, strict: true }
            }
            (None, None) => return Err(ServiceError::Config("no backend configured".into())),
        };
        Ok(Gateway::new(backend))
    }

    pub fn engine(&self) -> Result<Engine, ServiceError> {
        let mut engine = Engine::new(Arc::new(self.gateway()?));
        engine.strategy = self.strategy.clone();
        engine.cost = self.cost.clone();
        engine.u_max = self.u_max;
        engine.workspace = Some(self.data_dir.clone());
        if let Some(dir) = &self.rag_corpus_dir {
            let mut store = VectorStore::default();
            store.ingest_path(dir).map_err(|e| ServiceError::Config(e.to_string()))?;
            engine.rag.insert("default", store);
        }
        Ok(engine)
    }
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEvent {
    pub seq: u64,
    /// Unix time in milliseconds.
    pub timestamp: u64,
    pub kind: String,
    pub payload: Value,
}

impl StoredEvent {
    fn wrap(seq: u64, event: &SessionEvent) -> StoredEvent {
        let mut v = serde_json::to_value(event).expect("events serialize");
        let payload = v.get_mut("payload").map(Value::take).unwrap_or(Value::Null);
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
        StoredEvent { seq, timestamp, kind: event.kind().to_string(), payload }
    }

    pub fn event(&self) -> Result<SessionEvent, String> {
        serde_json::from_value(json!({"kind": self.kind, "payload": self.payload})).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    RunAuto,
    RunCheckpoint,
    ApproveStep {
        step_id: u32,
        #[serde(default)]
        changes: Option<StepEdit>,
    },
    Edit {
        edits: Vec<StepEdit>,
    },
    WhatIf {
        action: Action,
    },
}

/// What clients see of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: String,
    pub last_seq: u64,
    pub request: AnalysisRequest,
    pub mode: Option<SessionMode>,
    pub plan: Option<Plan>,
    pub hi_count: u32,
    pub transcript: Vec<TranscriptEntry>,
    pub outcome: Option<SessionOutcome>,
    pub what_ifs: Vec<WhatIfRecord>,
    pub artifacts: Vec<String>,
}

struct Log {
    path: PathBuf,
    events: Vec<StoredEvent>,
    error: Option<String>,
}

impl Log {
    fn append(&mut self, event: &SessionEvent) {
        let stored = StoredEvent::wrap(self.events.len() as u64 + 1, event);
        let line = serde_json::to_string(&stored).expect("stored events serialize");
        let res = OpenOptions::new().create(true).append(true).open(&self.path).and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = res {
            log::error!("{}: {e}", self.path.display());
            self.error.get_or_insert_with(|| e.to_string());
        }
        self.events.push(stored);
    }
}

struct Slot {
    session: Mutex<Session>,
    log: Arc<RwLock<Log>>,
}

pub struct Service {
    config: ServiceConfig,
    engine: Engine,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
    eval_lock: Mutex<()>,
    rubric: Rubric,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

/// Folds stored events, checking that sequence numbers run 1, 2, 3, ...
pub fn fold_log(events: &[StoredEvent]) -> Result<SessionState, ServiceError> {
    if events.is_empty() {
        return Err(ServiceError::NotFound("event log is empty".into()));
    }
    let mut parsed = Vec::with_capacity(events.len());
    for (i, e) in events.iter().enumerate() {
        if e.seq != i as u64 + 1 {
            return Err(ServiceError::CorruptLog(format!("expected seq {}, found {}", i + 1, e.seq)));
        }
        parsed.push(e.event().map_err(|m| ServiceError::CorruptLog(format!("seq {}: {m}", e.seq)))?);
    }
    SessionState::replay(&parsed).map_err(ServiceError::CorruptLog)
}

fn read_log(path: &Path) -> Result<Vec<StoredEvent>, ServiceError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(ServiceError::NotFound(path.display().to_string())),
        Err(e) => return Err(e.into()),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| ServiceError::CorruptLog(format!("line {}: {e}", i + 1))))
        .collect()
}

fn artifact_map(state: &SessionState) -> Vec<(String, String)> {
    let mut out = Vec::new();
    if let Some(o) = &state.outcome {
        out.extend(o.artifacts.iter().map(|(k, v)| (k.clone(), v.clone())));
        if let Ok(md) = render_report(state) {
            out.push(("report.md".into(), md));
        }
    }
    for (i, w) in state.what_ifs.iter().enumerate() {
        if let Some(o) = &w.outcome {
            out.extend(o.artifacts.iter().map(|(k, v)| (format!("whatif-{}-{k}", i + 1), v.clone())));
        }
    }
    out
}

pub fn content_type(name: &str) -> &'static str {
    match name.rsplit('.').next() {
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("md") => "text/markdown; charset=utf-8",
        Some("dot") => "text/vnd.graphviz",
        _ => "text/plain; charset=utf-8",
    }
}

impl Service {
    pub fn new(config: ServiceConfig) -> Result<Service, ServiceError> {
        config.check()?;
        let engine = config.engine()?;
        Ok(Service::with_engine(config, engine))
    }

    /// Uses a prepared engine (its workspace is forced to `data_dir`).
    pub fn with_engine(config: ServiceConfig, mut engine: Engine) -> Service {
        engine.workspace = Some(config.data_dir.clone());
        Service { config, engine, sessions: Mutex::new(HashMap::new()), eval_lock: Mutex::new(()), rubric: Rubric::default() }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.config.data_dir.join("sessions").join(format!("{id}.jsonl"))
    }

    fn attach(session: &mut Session, log: &Arc<RwLock<Log>>) {
        let sink = log.clone();
        session.set_listener(move |ev| sink.write().expect("log lock").append(ev));
    }

    pub fn create_session(&self, request: AnalysisRequest) -> Result<String, ServiceError> {
        request.check().map_err(ServiceError::from)?;
        for a in &request.attachments {
            resolve_attachment(Some(&self.config.data_dir), &a.path)
                .map_err(|e| ServiceError::AttachmentMissing(format!("{}: {e}", a.name)))?;
        }
        let id = uuid::Uuid::new_v4().to_string();
        let mut session = Session::new(id.clone(), request)?;
        fs::create_dir_all(self.config.data_dir.join("sessions"))?;
        let mut log = Log { path: self.log_path(&id), events: Vec::new(), error: None };
        log.append(&session.journal()[0]);
        if let Some(e) = log.error.take() {
            return Err(ServiceError::Internal(e));
        }
        let log = Arc::new(RwLock::new(log));
        Self::attach(&mut session, &log);
        let slot = Arc::new(Slot { session: Mutex::new(session), log });
        self.sessions.lock().expect("sessions lock").insert(id.clone(), slot);
        Ok(id)
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ServiceError> {
        if !valid_id(id) {
            return Err(ServiceError::NotFound(format!("session `{id}`")));
        }
        let mut map = self.sessions.lock().expect("sessions lock");
        if let Some(s) = map.get(id) {
            return Ok(s.clone());
        }
        let path = self.log_path(id);
        let events = read_log(&path).map_err(|e| match e {
            ServiceError::NotFound(_) => ServiceError::NotFound(format!("session `{id}`")),
            other => other,
        })?;
        fold_log(&events)?;
        let parsed = events.iter().map(|e| e.event()).collect::<Result<Vec<_>, _>>().map_err(ServiceError::CorruptLog)?;
        let mut session = Session::from_events(parsed)?;
        let log = Arc::new(RwLock::new(Log { path, events, error: None }));
        Self::attach(&mut session, &log);
        let slot = Arc::new(Slot { session: Mutex::new(session), log });
        map.insert(id.to_string(), slot.clone());
        Ok(slot)
    }

    fn snapshot_of(session: &Session, last_seq: u64) -> Snapshot {
        let st = session.state();
        Snapshot {
            id: st.id.clone(),
            last_seq,
            request: st.request.clone(),
            mode: st.mode,
            plan: st.plan.clone(),
            hi_count: st.hi_count,
            transcript: st.transcript.clone(),
            outcome: st.outcome.clone(),
            what_ifs: st.what_ifs.clone(),
            artifacts: artifact_map(st).into_iter().map(|(k, _)| k).collect(),
        }
    }

    pub fn snapshot(&self, id: &str) -> Result<Snapshot, ServiceError> {
        let slot = self.slot(id)?;
        let session = slot.session.lock().expect("session lock");
        let seq = slot.log.read().expect("log lock").events.len() as u64;
        Ok(Self::snapshot_of(&session, seq))
    }

    /// Runs one command; commands on the same session are serialized.
    pub fn advance(&self, id: &str, command: Command) -> Result<Snapshot, ServiceError> {
        let slot = self.slot(id)?;
        let mut session = slot.session.lock().expect("session lock");
        let e = &self.engine;
        let res = match command {
            Command::RunAuto => session.run_auto(e),
            Command::RunCheckpoint => session.run_checkpoint(e),
            Command::ApproveStep { step_id, changes } => session.approve_step(e, step_id, changes),
            Command::Edit { edits } => session.edit_plan(e, edits),
            Command::WhatIf { action } => session.what_if(e, action),
        };
        let log = slot.log.read().expect("log lock");
        if let Some(err) = &log.error {
            return Err(ServiceError::Internal(format!("event log write failed: {err}")));
        }
        res?;
        Ok(Self::snapshot_of(&session, log.events.len() as u64))
    }

    pub fn events_after(&self, id: &str, after: u64) -> Result<Vec<StoredEvent>, ServiceError> {
        let slot = self.slot(id)?;
        let log = slot.log.read().expect("log lock");
        Ok(log.events.iter().filter(|e| e.seq > after).cloned().collect())
    }

    /// Rebuilds the state from the log on disk.
    pub fn replay(&self, id: &str) -> Result<SessionState, ServiceError> {
        if !valid_id(id) {
            return Err(ServiceError::NotFound(format!("session `{id}`")));
        }
        fold_log(&read_log(&self.log_path(id))?)
    }

    /// Live in-memory state.
    pub fn state(&self, id: &str) -> Result<SessionState, ServiceError> {
        let slot = self.slot(id)?;
        let session = slot.session.lock().expect("session lock");
        Ok(session.state().clone())
    }

    pub fn artifact(&self, id: &str, name: &str) -> Result<(&'static str, String), ServiceError> {
        let state = self.state(id)?;
        artifact_map(&state)
            .into_iter()
            .find(|(k, _)| k == name)
            .map(|(k, v)| (content_type(&k), v))
            .ok_or_else(|| ServiceError::NotFound(format!("artifact `{name}`")))
    }

    pub fn session_ids(&self) -> Result<Vec<String>, ServiceError> {
        let dir = self.config.data_dir.join("sessions");
        let mut ids = Vec::new();
        if dir.exists() {
            for entry in fs::read_dir(dir)? {
                let name = entry?.file_name().to_string_lossy().into_owned();
                if let Some(id) = name.strip_suffix(".jsonl") {
                    ids.push(id.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    fn records_path(&self) -> PathBuf {
        self.config.data_dir.join(eval::RECORDS_FILE)
    }

    pub fn add_eval_record(&self, record: EvalRecord) -> Result<(), ServiceError> {
        let _guard = self.eval_lock.lock().expect("eval lock");
        eval::append_record(&self.records_path(), &record)?;
        Ok(())
    }

    pub fn eval_records(&self) -> Result<Vec<EvalRecord>, ServiceError> {
        let _guard = self.eval_lock.lock().expect("eval lock");
        Ok(eval::load_records(&self.records_path())?)
    }

    /// Report over stored records; completion counts finished sessions.
    pub fn eval_report(&self, format: ReportFormat) -> Result<String, ServiceError> {
        let records = self.eval_records()?;
        let mut tallies = Vec::new();
        for id in self.session_ids()? {
            if let Some(o) = self.state(&id).ok().and_then(|s| s.outcome) {
                tallies.push(SessionTally { complete: o.complete, hlp_accuracy: None });
            }
        }
        let summary = eval::aggregate(&records, &tallies);
        Ok(eval::export_report(&summary, format, &self.rubric))
    }
}
