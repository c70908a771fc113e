//! Analyzer, planner, calculator and executor roles over a tool registry.
//!
//! The analyzer judges feasibility and names tools, the planner writes a
//! step list, the calculator picks solver arguments for numeric steps (the
//! solving itself is native), and the executor summarizes. A [`Session`]
//! records every transition as a [`SessionEvent`]; folding the events with
//! [`SessionState::apply`] rebuilds the state exactly.

mod exec;
mod session;
mod state;
mod tools;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::capacity_solver::{CostModel, OracleLimits};
use crate::llm_gateway::{build_prompt, extract_json_object, ChatMessage, Gateway, GatewayError, PromptError, PromptStrategy, RagLibrary};

pub use exec::{resolve_attachment, LoadedInput, SearchHitSummary, SolveArgs, SolveRecord, StepOutput, StepResult};
pub use session::Session;
pub use state::{
    Comparison, EntryKind, Role, SessionEvent, SessionOutcome, SessionState, StepEdit, TranscriptEntry, WhatIfRecord,
};
pub use tools::{ArgKind, ArgSpec, ToolRegistry, ToolSpec};

pub const ANALYZER_TEMPLATE: &str = include_str!("../../prompts/analyzer.txt");
pub const PLANNER_TEMPLATE: &str = include_str!("../../prompts/planner.txt");
pub const CALCULATOR_TEMPLATE: &str = include_str!("../../prompts/calculator.txt");
pub const EXECUTOR_TEMPLATE: &str = include_str!("../../prompts/executor.txt");
pub const MAX_LOOP_COUNT: u32 = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("extraction failed: {0}")]
    ExtractionFailed(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("analysis judged the task infeasible: {0}")]
    InfeasibleReport(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("plan invariant violated: {0}")]
    Invariant(String),
    #[error("illegal transition: {0}")]
    IllegalTransition(String),
    #[error("tool failed: {0}")]
    Tool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttachmentKind {
    Topology,
    Traffic,
    Document,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub name: String,
    pub kind: AttachmentKind,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisRequest {
    pub task_text: String,
    #[serde(default)]
    pub state_text: String,
    #[serde(default)]
    pub constraint_text: String,
    #[serde(default)]
    pub attachments: Vec<Attachment>,
}

impl AnalysisRequest {
    pub fn new(task: impl Into<String>) -> Self {
        AnalysisRequest { task_text: task.into(), state_text: String::new(), constraint_text: String::new(), attachments: vec![] }
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        if self.task_text.trim().is_empty() {
            return Err(PipelineError::BadRequest("task_text is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for a in &self.attachments {
            if a.name.trim().is_empty() || a.path.trim().is_empty() {
                return Err(PipelineError::BadRequest("attachment name and path must be non-empty".into()));
            }
            if !seen.insert(&a.name) {
                return Err(PipelineError::BadRequest(format!("duplicate attachment `{}`", a.name)));
            }
        }
        Ok(())
    }

    pub fn attachment(&self, name: &str) -> Option<&Attachment> {
        self.attachments.iter().find(|a| a.name == name)
    }

    pub fn first_of(&self, kind: AttachmentKind) -> Option<&Attachment> {
        self.attachments.iter().find(|a| a.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub feasible: bool,
    #[serde(default)]
    pub concepts: Vec<String>,
    #[serde(default)]
    pub required_tools: Vec<String>,
    #[serde(default)]
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Control {
    #[default]
    Sequence,
    Loop { count: u32 },
}

impl Control {
    pub fn count(self) -> u32 {
        match self {
            Control::Sequence => 1,
            Control::Loop { count } => count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    ReadFile,
    CallTool,
    EmitArtifact,
}

impl StepAction {
    pub fn as_str(self) -> &'static str {
        match self {
            StepAction::ReadFile => "read_file",
            StepAction::CallTool => "call_tool",
            StepAction::EmitArtifact => "emit_artifact",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default)]
    pub args: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    #[default]
    Pending,
    Approved,
    Running,
    Done,
    Failed,
    Edited,
}

impl StepStatus {
    pub fn editable(self) -> bool {
        matches!(self, StepStatus::Pending | StepStatus::Approved | StepStatus::Edited)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub id: u32,
    pub description: String,
    #[serde(default)]
    pub control: Control,
    pub action: StepAction,
    #[serde(default)]
    pub tool: Option<ToolCall>,
    #[serde(default)]
    pub status: StepStatus,
    #[serde(default)]
    pub result_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Plan {
    pub steps: Vec<Step>,
}

impl Plan {
    pub fn step(&self, id: u32) -> Option<&Step> {
        self.steps.iter().find(|s| s.id == id)
    }

    pub fn done_count(&self) -> usize {
        self.steps.iter().filter(|s| s.status == StepStatus::Done).count()
    }

    /// First step that has not completed, if any.
    pub fn next_open(&self) -> Option<&Step> {
        self.steps.iter().find(|s| s.status != StepStatus::Done)
    }
}

/// Structural checks of a plan against the registry and the request's
/// attachments.
pub fn validate_plan(plan: &Plan, request: &AnalysisRequest, registry: &ToolRegistry) -> Result<(), String> {
    if plan.steps.is_empty() {
        return Err("plan has no steps".into());
    }
    let mut produced_at: Vec<(&str, usize)> = Vec::new();
    for (i, s) in plan.steps.iter().enumerate() {
        if i > 0 && s.id <= plan.steps[i - 1].id {
            return Err(format!("step ids must increase strictly (step {} follows {})", s.id, plan.steps[i - 1].id));
        }
        if let Control::Loop { count } = s.control {
            if count == 0 || count > MAX_LOOP_COUNT {
                return Err(format!("step {}: loop count {count} outside 1..={MAX_LOOP_COUNT}", s.id));
            }
        }
        let call = s.tool.as_ref().ok_or_else(|| format!("step {}: no tool bound", s.id))?;
        let spec = registry.get(&call.name).ok_or_else(|| format!("step {}: unknown tool `{}`", s.id, call.name))?;
        if spec.action != s.action {
            return Err(format!("step {}: tool `{}` is a {} tool, not {}", s.id, call.name, spec.action.as_str(), s.action.as_str()));
        }
        registry.check_args(&call.name, &call.args).map_err(|e| format!("step {}: {e}", s.id))?;
        if let Some(kind) = spec.produces {
            let name = call.args.get("attachment").and_then(Value::as_str).unwrap_or_default();
            let att = request.attachment(name).ok_or_else(|| format!("step {}: no attachment named `{name}`", s.id))?;
            let wanted = if kind == "topology" { AttachmentKind::Topology } else { AttachmentKind::Traffic };
            if att.kind != wanted {
                return Err(format!("step {}: attachment `{name}` is not a {kind} file", s.id));
            }
            produced_at.push((kind, i));
        }
    }
    for (i, s) in plan.steps.iter().enumerate() {
        let spec = registry.get(&s.tool.as_ref().expect("checked").name).expect("checked");
        for input in spec.consumes {
            if produced_at.iter().any(|(k, at)| k == input && *at > i) {
                return Err(format!("step {}: reads {input} before the step that loads it", s.id));
            }
            let kind = if *input == "topology" { AttachmentKind::Topology } else { AttachmentKind::Traffic };
            let loaded_earlier = produced_at.iter().any(|(k, at)| k == input && *at < i);
            if !loaded_earlier && request.first_of(kind).is_none() {
                return Err(format!("step {}: no {input} is attached or loaded", s.id));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionMode {
    Auto,
    Checkpoint,
}

/// Everything a session needs besides its own state.
#[derive(Debug, Clone)]
pub struct Engine {
    pub gateway: Arc<Gateway>,
    pub strategy: PromptStrategy,
    pub rag: RagLibrary,
    pub registry: ToolRegistry,
    /// Attachment paths must resolve inside this directory when set.
    pub workspace: Option<PathBuf>,
    pub cost: CostModel,
    pub u_max: f64,
    pub oracle_limits: OracleLimits,
}

impl Engine {
    pub fn new(gateway: Arc<Gateway>) -> Self {
        Engine {
            gateway,
            strategy: PromptStrategy::ZeroShot,
            rag: RagLibrary::default(),
            registry: ToolRegistry::default(),
            workspace: None,
            cost: CostModel::default(),
            u_max: 0.8,
            oracle_limits: OracleLimits::default(),
        }
    }
}

fn role_system(role: Role) -> &'static str {
    match role {
        Role::Analyzer => "You are a network planner assessing the feasibility of network tasks.",
        Role::Planner => "You are a network planner who writes step-by-step execution plans.",
        Role::Calculator => "You are a network optimization specialist who prepares solver inputs.",
        Role::Executor => "You are a network engineer who reports final planning results.",
        Role::Human => "",
    }
}

/// Fills `{{task}}`, `{{state}}`, `{{constraints}}`, `{{tools}}` and
/// `{{context}}` in one pass; slot-like text inside the values is left alone.
pub fn fill_template(template: &str, request: &AnalysisRequest, tools: &str, context: &str) -> String {
    let or_none = |s: &str| if s.trim().is_empty() { "(none)".to_string() } else { s.to_string() };
    let mut out = String::with_capacity(template.len() + 512);
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else {
            out.push_str(&rest[open..]);
            rest = "";
            break;
        };
        let value = match &after[..close] {
            "task" => Some(request.task_text.clone()),
            "state" => Some(or_none(&request.state_text)),
            "constraints" => Some(or_none(&request.constraint_text)),
            "tools" => Some(tools.to_string()),
            "context" => Some(or_none(context)),
            _ => None,
        };
        match value {
            Some(v) => out.push_str(&v),
            None => out.push_str(&rest[open..open + 4 + close]),
        }
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    out
}

fn tag(role: Role) -> String {
    format!("[role:{}]", role.as_str())
}

/// One role exchange expecting JSON: prompt, validate, and on failure one
/// reprompt quoting the validator message.
pub(crate) fn consult_json<T>(
    engine: &Engine,
    role: Role,
    prompt: String,
    transcript: &mut Vec<TranscriptEntry>,
    validate: impl Fn(&str) -> Result<T, String>,
) -> Result<T, PipelineError> {
    let mut messages = build_prompt(&engine.strategy, &prompt, role_system(role), &engine.rag)?;
    transcript.push(TranscriptEntry::new(role, EntryKind::Prompt, prompt));
    let first = engine.gateway.complete(&messages)?;
    transcript.push(TranscriptEntry::new(role, EntryKind::Reply, first.content.clone()));
    let problem = match validate(&first.content) {
        Ok(v) => return Ok(v),
        Err(p) => p,
    };
    let retry = format!("{} Your previous reply was invalid: {problem}. Reply with only the JSON object.", tag(role));
    messages.push(first);
    messages.push(ChatMessage::user(retry.clone()));
    transcript.push(TranscriptEntry::new(role, EntryKind::Prompt, retry));
    let second = engine.gateway.complete(&messages)?;
    transcript.push(TranscriptEntry::new(role, EntryKind::Reply, second.content.clone()));
    validate(&second.content).map_err(|p| PipelineError::ExtractionFailed(format!("{} reply: {p}", role.as_str())))
}

/// Free-text role exchange.
pub(crate) fn consult_text(
    engine: &Engine,
    role: Role,
    prompt: String,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<String, PipelineError> {
    let messages = build_prompt(&engine.strategy, &prompt, role_system(role), &engine.rag)?;
    transcript.push(TranscriptEntry::new(role, EntryKind::Prompt, prompt));
    let reply = engine.gateway.complete(&messages)?;
    transcript.push(TranscriptEntry::new(role, EntryKind::Reply, reply.content.clone()));
    Ok(reply.content)
}

pub(crate) fn attachment_listing(request: &AnalysisRequest) -> String {
    request
        .attachments
        .iter()
        .map(|a| format!("- {} ({:?}): {}", a.name, a.kind, a.path).to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_json_reply(reply: &str) -> Result<Value, String> {
    let json = extract_json_object(reply).ok_or("reply contains no JSON object")?;
    serde_json::from_str(json).map_err(|e| e.to_string())
}

/// Feasibility report from the analyzer role. Tool names outside the
/// registry are dropped with a warning.
pub fn analyze(
    request: &AnalysisRequest,
    engine: &Engine,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<AnalysisReport, PipelineError> {
    request.check()?;
    let prompt = fill_template(ANALYZER_TEMPLATE, request, &engine.registry.catalog(), &attachment_listing(request));
    consult_json(engine, Role::Analyzer, prompt, transcript, |reply| {
        let mut report: AnalysisReport = serde_json::from_value(parse_json_reply(reply)?).map_err(|e| e.to_string())?;
        let mut kept = Vec::new();
        for t in std::mem::take(&mut report.required_tools) {
            if engine.registry.get(&t).is_some() {
                if !kept.contains(&t) {
                    kept.push(t);
                }
            } else {
                log::warn!("analyzer named unknown tool `{t}`");
                report.warnings.push(format!("unknown tool `{t}` removed"));
            }
        }
        report.required_tools = kept;
        Ok(report)
    })
}

#[derive(Deserialize)]
struct PlanReply {
    steps: Vec<Step>,
}

/// Step list from the planner role, validated against the registry and the
/// request's attachments.
pub fn make_plan(
    report: &AnalysisReport,
    request: &AnalysisRequest,
    engine: &Engine,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<Plan, PipelineError> {
    if !report.feasible {
        return Err(PipelineError::InfeasibleReport(report.rationale.clone()));
    }
    let context = format!(
        "Concepts: {}\nRequired tools: {}\nRationale: {}\nAttachments:\n{}",
        report.concepts.join(", "),
        report.required_tools.join(", "),
        report.rationale,
        attachment_listing(request)
    );
    let prompt = fill_template(PLANNER_TEMPLATE, request, &engine.registry.catalog(), &context);
    consult_json(engine, Role::Planner, prompt, transcript, |reply| {
        let parsed: PlanReply = serde_json::from_value(parse_json_reply(reply)?).map_err(|e| e.to_string())?;
        let mut plan = Plan { steps: parsed.steps };
        for s in &mut plan.steps {
            s.status = StepStatus::Pending;
            s.result_ref = None;
        }
        validate_plan(&plan, request, &engine.registry)?;
        Ok(plan)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::{Backend, ReplayEntry};
    use serde_json::json;

    pub(crate) fn capacity_request() -> AnalysisRequest {
        AnalysisRequest {
            task_text: "Plan IP capacity for the backbone".into(),
            state_text: "three routers".into(),
            constraint_text: "utilization at most 80% from 9 AM to 5 PM".into(),
            attachments: vec![
                Attachment { name: "topology".into(), kind: AttachmentKind::Topology, path: "triangle.json".into() },
                Attachment { name: "traffic".into(), kind: AttachmentKind::Traffic, path: "traffic.csv".into() },
            ],
        }
    }

    fn engine(script: &[(&str, &str)]) -> Engine {
        let script = script.iter().map(|(m, r)| ReplayEntry { r#match: m.to_string(), response: r.to_string() }).collect();
        Engine::new(Arc::new(Gateway::new(Backend::Replay { script, strict: true })))
    }

    fn step(id: u32, action: StepAction, tool: &str, args: Value) -> Step {
        Step {
            id,
            description: format!("step {id}"),
            control: Control::Sequence,
            action,
            tool: Some(ToolCall { name: tool.into(), args: args.as_object().cloned().unwrap_or_default() }),
            status: StepStatus::Pending,
            result_ref: None,
        }
    }

    #[test]
    fn template_slots_fill_once() {
        let mut req = AnalysisRequest::new("say {{tools}}");
        req.constraint_text = String::new();
        let out = fill_template("T={{task}} C={{constraints}} X={{other}}", &req, "TOOLS", "");
        assert_eq!(out, "T=say {{tools}} C=(none) X={{other}}");
        for t in [ANALYZER_TEMPLATE, PLANNER_TEMPLATE, CALCULATOR_TEMPLATE, EXECUTOR_TEMPLATE] {
            for slot in ["{{task}}", "{{state}}", "{{constraints}}", "{{tools}}", "{{context}}"] {
                assert!(t.contains(slot), "{slot}");
            }
        }
    }

    #[test]
    fn analyzer_strips_unknown_tools() {
        let eng = engine(&[(
            "[role:analyzer]",
            r#"{"feasible":true,"concepts":["capacity"],"required_tools":["solve_capacity","Cplex","render_topology"],"rationale":"ok"}"#,
        )]);
        let mut tr = Vec::new();
        let report = analyze(&capacity_request(), &eng, &mut tr).unwrap();
        assert_eq!(report.required_tools, vec!["solve_capacity", "render_topology"]);
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(tr.len(), 2);
        assert_eq!(tr[0].role, Role::Analyzer);
    }

    #[test]
    fn empty_task_never_reaches_the_llm() {
        let eng = engine(&[]);
        let err = analyze(&AnalysisRequest::new("  "), &eng, &mut Vec::new()).unwrap_err();
        assert!(matches!(err, PipelineError::BadRequest(_)));
        assert_eq!(eng.gateway.calls(), 0);
    }

    #[test]
    fn infeasible_report_blocks_planning() {
        let eng = engine(&[]);
        let report = AnalysisReport { feasible: false, concepts: vec![], required_tools: vec![], rationale: "no".into(), warnings: vec![] };
        assert!(matches!(
            make_plan(&report, &capacity_request(), &eng, &mut Vec::new()),
            Err(PipelineError::InfeasibleReport(_))
        ));
    }

    #[test]
    fn duplicate_ids_reprompt_then_fail() {
        let dup = r#"{"steps":[{"id":1,"description":"a","action":"read_file","tool":{"name":"read_traffic_matrix","args":{"attachment":"traffic"}}},
                               {"id":1,"description":"b","action":"call_tool","tool":{"name":"solve_capacity"}}]}"#;
        let eng = engine(&[("[role:planner]", dup)]);
        let report = AnalysisReport { feasible: true, concepts: vec![], required_tools: vec![], rationale: String::new(), warnings: vec![] };
        let mut tr = Vec::new();
        let err = make_plan(&report, &capacity_request(), &eng, &mut tr).unwrap_err();
        assert!(matches!(err, PipelineError::ExtractionFailed(_)));
        assert_eq!(eng.gateway.calls(), 2);
        assert!(tr[2].content.contains("strictly"));
    }

    #[test]
    fn plan_validation_rules() {
        let reg = ToolRegistry::default();
        let req = capacity_request();
        let read = step(1, StepAction::ReadFile, "read_traffic_matrix", json!({"attachment": "traffic"}));
        let solve = step(2, StepAction::CallTool, "solve_capacity", json!({}));
        let render = step(3, StepAction::EmitArtifact, "render_topology", json!({}));
        let good = Plan { steps: vec![read.clone(), solve.clone(), render.clone()] };
        assert!(validate_plan(&good, &req, &reg).is_ok());

        let late_read = Plan { steps: vec![step(1, StepAction::CallTool, "solve_capacity", json!({})), step(2, read.action, "read_traffic_matrix", json!({"attachment": "traffic"}))] };
        assert!(validate_plan(&late_read, &req, &reg).unwrap_err().contains("before"));

        let missing = Plan { steps: vec![step(1, StepAction::ReadFile, "read_traffic_matrix", json!({"attachment": "nope"}))] };
        assert!(validate_plan(&missing, &req, &reg).unwrap_err().contains("nope"));

        let wrong_kind = Plan { steps: vec![step(1, StepAction::ReadFile, "read_topology", json!({"attachment": "traffic"}))] };
        assert!(validate_plan(&wrong_kind, &req, &reg).is_err());

        let mut looped = good.clone();
        looped.steps[1].control = Control::Loop { count: 33 };
        assert!(validate_plan(&looped, &req, &reg).is_err());

        let mismatch = Plan { steps: vec![step(1, StepAction::EmitArtifact, "solve_capacity", json!({}))] };
        assert!(validate_plan(&mismatch, &req, &reg).is_err());

        let no_traffic = AnalysisRequest::new("x");
        assert!(validate_plan(&Plan { steps: vec![solve] }, &no_traffic, &reg).unwrap_err().contains("no topology"));
    }

    #[test]
    fn step_json_shape() {
        let s: Step = serde_json::from_value(json!({
            "id": 2, "description": "solve", "control": {"loop": {"count": 3}}, "action": "call_tool",
            "tool": {"name": "solve_capacity", "args": {"u_max": 0.8}}
        }))
        .unwrap();
        assert_eq!(s.control, Control::Loop { count: 3 });
        assert_eq!(s.status, StepStatus::Pending);
        let back = serde_json::to_value(&s).unwrap();
        assert_eq!(back["control"], json!({"loop": {"count": 3}}));
        assert_eq!(serde_json::to_value(Control::Sequence).unwrap(), json!("sequence"));
    }
}
