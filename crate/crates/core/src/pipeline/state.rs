//! Session state and the events that build it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::exec::{LoadedInput, SolveRecord, StepOutput, StepResult};
use super::{AnalysisReport, AnalysisRequest, Control, Plan, SessionMode, StepAction, StepStatus, ToolCall};
use crate::eval::EvalRecord;
use crate::intent_compiler::NetworkArtifact;
use crate::net_model::{Action, Topology, TrafficMatrix};
use crate::render::Layout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Analyzer,
    Planner,
    Calculator,
    Executor,
    Human,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Analyzer => "analyzer",
            Role::Planner => "planner",
            Role::Calculator => "calculator",
            Role::Executor => "executor",
            Role::Human => "human",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Prompt,
    Reply,
    Note,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub kind: EntryKind,
    pub content: String,
}

impl TranscriptEntry {
    pub fn new(role: Role, kind: EntryKind, content: impl Into<String>) -> Self {
        TranscriptEntry { role, kind, content: content.into() }
    }
}

/// Field changes for one step. `args` entries are merged into the step's
/// tool arguments; a JSON null removes the key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct StepEdit {
    pub step_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<Control>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<StepAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args: Option<Map<String, Value>>,
}

impl StepEdit {
    pub(crate) fn apply_to(&self, plan: &mut Plan) -> Result<(), String> {
        let step = plan
            .steps
            .iter_mut()
            .find(|s| s.id == self.step_id)
            .ok_or_else(|| format!("step {} does not exist", self.step_id))?;
        if !step.status.editable() {
            return Err(format!("step {} is {:?} and can no longer change", self.step_id, step.status));
        }
        if let Some(d) = &self.description {
            step.description = d.clone();
        }
        if let Some(c) = self.control {
            step.control = c;
        }
        if let Some(a) = self.action {
            step.action = a;
        }
        if let Some(t) = &self.tool {
            step.tool = Some(t.clone());
        }
        if let Some(args) = &self.args {
            let call = step.tool.as_mut().ok_or_else(|| format!("step {} has no tool to take arguments", self.step_id))?;
            for (k, v) in args {
                if v.is_null() {
                    call.args.remove(k);
                } else {
                    call.args.insert(k.clone(), v.clone());
                }
            }
        }
        step.status = StepStatus::Edited;
        Ok(())
    }

    fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(d) = &self.description {
            parts.push(format!("description={d:?}"));
        }
        if let Some(c) = self.control {
            parts.push(format!("control={}", serde_json::to_string(&c).unwrap_or_default()));
        }
        if let Some(a) = self.action {
            parts.push(format!("action={}", a.as_str()));
        }
        if let Some(t) = &self.tool {
            parts.push(format!("tool={}", t.name));
        }
        if let Some(args) = &self.args {
            for (k, v) in args {
                parts.push(format!("{k}={v}"));
            }
        }
        format!("step {}: {}", self.step_id, parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub action: Action,
    pub old_cost: f64,
    /// Cost of the re-solved plan on the changed topology.
    pub new_plan_cost: f64,
    /// Price of the action itself (modules it installs).
    pub action_cost: f64,
    pub new_cost: f64,
    pub cost_delta: f64,
    pub old_max_utilization: f64,
    pub new_max_utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub complete: bool,
    pub completed_steps: usize,
    pub total_steps: usize,
    /// completed_steps / total_steps (0 when there is no plan).
    pub completion: f64,
    #[serde(default)]
    pub total_cost: Option<f64>,
    #[serde(default)]
    pub max_utilization: Option<f64>,
    #[serde(default)]
    pub feasible: Option<bool>,
    /// Artifact name to content.
    pub artifacts: BTreeMap<String, String>,
    #[serde(default)]
    pub summary: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub comparison: Option<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRecord {
    pub action: Action,
    pub outcome: Option<SessionOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum SessionEvent {
    Request {
        id: String,
        request: AnalysisRequest,
    },
    Analysis {
        mode: SessionMode,
        report: Option<AnalysisReport>,
        error: Option<String>,
        transcript: Vec<TranscriptEntry>,
    },
    Plan {
        plan: Option<Plan>,
        error: Option<String>,
        transcript: Vec<TranscriptEntry>,
    },
    StepStarted {
        step_id: u32,
    },
    StepDone {
        step_id: u32,
        result: StepResult,
        transcript: Vec<TranscriptEntry>,
    },
    StepFailed {
        step_id: u32,
        error: String,
        transcript: Vec<TranscriptEntry>,
    },
    Edit {
        edits: Vec<StepEdit>,
    },
    Approval {
        step_id: u32,
        changes: Option<StepEdit>,
    },
    WhatIf {
        action: Action,
    },
    Outcome {
        outcome: SessionOutcome,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        transcript: Vec<TranscriptEntry>,
    },
    Eval {
        record: EvalRecord,
    },
}

impl SessionEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            SessionEvent::Request { .. } => "request",
            SessionEvent::Analysis { .. } => "analysis",
            SessionEvent::Plan { .. } => "plan",
            SessionEvent::StepStarted { .. } => "step_started",
            SessionEvent::StepDone { .. } => "step_done",
            SessionEvent::StepFailed { .. } => "step_failed",
            SessionEvent::Edit { .. } => "edit",
            SessionEvent::Approval { .. } => "approval",
            SessionEvent::WhatIf { .. } => "what_if",
            SessionEvent::Outcome { .. } => "outcome",
            SessionEvent::Eval { .. } => "eval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRecord {
    pub layout: Layout,
    pub dot: String,
    pub svg: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub request: AnalysisRequest,
    pub mode: Option<SessionMode>,
    pub report: Option<AnalysisReport>,
    pub plan: Option<Plan>,
    pub topology: Option<Topology>,
    pub traffic: Option<TrafficMatrix>,
    pub step_results: BTreeMap<u32, StepResult>,
    pub step_errors: BTreeMap<u32, String>,
    pub last_solve: Option<SolveRecord>,
    pub last_render: Option<RenderRecord>,
    pub hi_count: u32,
    pub transcript: Vec<TranscriptEntry>,
    pub outcome: Option<SessionOutcome>,
    pub what_ifs: Vec<WhatIfRecord>,
    pub evals: Vec<EvalRecord>,
}

impl SessionState {
    pub fn new(id: impl Into<String>, request: AnalysisRequest) -> Self {
        SessionState {
            id: id.into(),
            request,
            mode: None,
            report: None,
            plan: None,
            topology: None,
            traffic: None,
            step_results: BTreeMap::new(),
            step_errors: BTreeMap::new(),
            last_solve: None,
            last_render: None,
            hi_count: 0,
            transcript: Vec::new(),
            outcome: None,
            what_ifs: Vec::new(),
            evals: Vec::new(),
        }
    }

    /// Folds an event log. The first event must be the request.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a SessionEvent>) -> Result<SessionState, String> {
        let mut it = events.into_iter();
        let mut state = match it.next() {
            Some(SessionEvent::Request { id, request }) => SessionState::new(id.clone(), request.clone()),
            Some(other) => return Err(format!("log starts with `{}`, not `request`", other.kind())),
            None => return Err("empty log".into()),
        };
        for ev in it {
            state.apply(ev)?;
        }
        Ok(state)
    }

    /// Compiled network artifacts in step order.
    pub fn artifacts(&self) -> impl Iterator<Item = &NetworkArtifact> {
        self.step_results.values().filter_map(|r| match &r.output {
            StepOutput::Artifact { artifact, .. } => Some(artifact),
            _ => None,
        })
    }

    /// Number of transcript entries from the operator; equals `hi_count`.
    pub fn human_entries(&self) -> usize {
        self.transcript.iter().filter(|e| e.role == Role::Human).count()
    }

    fn step_mut(&mut self, id: u32) -> Result<&mut super::Step, String> {
        self.plan
            .as_mut()
            .and_then(|p| p.steps.iter_mut().find(|s| s.id == id))
            .ok_or_else(|| format!("event references unknown step {id}"))
    }

    /// Takes in the data a step result carries (without touching step status).
    pub(crate) fn absorb(&mut self, result: &StepResult) {
        for l in &result.loaded {
            match l {
                LoadedInput::Topology { topology } => self.topology = Some(topology.clone()),
                LoadedInput::Traffic { traffic } => self.traffic = Some(traffic.clone()),
            }
        }
        match &result.output {
            StepOutput::Topology { topology } | StepOutput::TopologyUpdated { topology, .. } => {
                self.topology = Some(topology.clone())
            }
            StepOutput::Traffic { traffic } => self.traffic = Some(traffic.clone()),
            StepOutput::Solve(rec) => self.last_solve = Some(rec.clone()),
            StepOutput::Render { layout, dot, svg } => {
                self.last_render = Some(RenderRecord { layout: *layout, dot: dot.clone(), svg: svg.clone() })
            }
            StepOutput::Artifact { .. } | StepOutput::Search { .. } => {}
        }
    }

    pub fn apply(&mut self, event: &SessionEvent) -> Result<(), String> {
        match event {
            SessionEvent::Request { .. } => return Err("duplicate request event".into()),
            SessionEvent::Analysis { mode, report, transcript, .. } => {
                self.mode = Some(*mode);
                self.report = report.clone();
                self.transcript.extend(transcript.iter().cloned());
            }
            SessionEvent::Plan { plan, transcript, .. } => {
                self.plan = plan.clone();
                self.transcript.extend(transcript.iter().cloned());
            }
            SessionEvent::StepStarted { step_id } => self.step_mut(*step_id)?.status = StepStatus::Running,
            SessionEvent::StepDone { step_id, result, transcript } => {
                let step = self.step_mut(*step_id)?;
                step.status = StepStatus::Done;
                step.result_ref = Some(format!("step-{step_id}"));
                self.transcript.extend(transcript.iter().cloned());
                self.absorb(result);
                self.step_results.insert(*step_id, result.clone());
            }
            SessionEvent::StepFailed { step_id, error, transcript } => {
                self.step_mut(*step_id)?.status = StepStatus::Failed;
                self.transcript.extend(transcript.iter().cloned());
                self.step_errors.insert(*step_id, error.clone());
            }
            SessionEvent::Edit { edits } => {
                let plan = self.plan.as_mut().ok_or("edit before a plan exists")?;
                for e in edits {
                    e.apply_to(plan)?;
                }
                let text = edits.iter().map(StepEdit::describe).collect::<Vec<_>>().join("; ");
                self.transcript.push(TranscriptEntry::new(Role::Human, EntryKind::Note, format!("edit plan: {text}")));
                self.hi_count += 1;
            }
            SessionEvent::Approval { step_id, changes } => match changes {
                Some(edit) => {
                    let plan = self.plan.as_mut().ok_or("approval before a plan exists")?;
                    edit.apply_to(plan)?;
                    self.transcript
                        .push(TranscriptEntry::new(Role::Human, EntryKind::Note, format!("approve with changes: {}", edit.describe())));
                    self.hi_count += 1;
                }
                None => self.step_mut(*step_id)?.status = StepStatus::Approved,
            },
            SessionEvent::WhatIf { action } => {
                let text = serde_json::to_string(action).unwrap_or_default();
                self.transcript.push(TranscriptEntry::new(Role::Human, EntryKind::Note, format!("what-if: {text}")));
                self.what_ifs.push(WhatIfRecord { action: action.clone(), outcome: None });
                self.hi_count += 1;
            }
            SessionEvent::Outcome { outcome, transcript } => {
                self.transcript.extend(transcript.iter().cloned());
                if outcome.comparison.is_some() {
                    let slot = self.what_ifs.last_mut().ok_or("what-if outcome without a what-if")?;
                    slot.outcome = Some(outcome.clone());
                } else {
                    self.outcome = Some(outcome.clone());
                }
            }
            SessionEvent::Eval { record } => self.evals.push(record.clone()),
        }
        Ok(())
    }
}
