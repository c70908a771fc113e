//! Session driver: runs the roles, records events, enforces transitions.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::exec::{default_layout, execute, render, run_solver, SolveArgs, StepOutput};
use super::state::{Comparison, EntryKind, Role, SessionEvent, SessionOutcome, SessionState, StepEdit, TranscriptEntry};
use super::{
    analyze, attachment_listing, consult_json, consult_text, fill_template, make_plan, parse_json_reply, validate_plan,
    Engine, PipelineError, SessionMode, StepStatus, ToolCall, CALCULATOR_TEMPLATE, EXECUTOR_TEMPLATE,
};
use crate::net_model::{apply_action, Action, ModelError};

type Listener = Box<dyn FnMut(&SessionEvent) + Send>;

pub struct Session {
    state: SessionState,
    journal: Vec<SessionEvent>,
    listener: Option<Listener>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("state", &self.state).field("events", &self.journal.len()).finish()
    }
}

fn is_solver(tool: &str) -> bool {
    tool == "solve_capacity" || tool == "brute_force_oracle"
}

impl Session {
    pub fn new(id: impl Into<String>, request: super::AnalysisRequest) -> Result<Session, PipelineError> {
        request.check()?;
        let id = id.into();
        let state = SessionState::new(id.clone(), request.clone());
        Ok(Session { state, journal: vec![SessionEvent::Request { id, request }], listener: None })
    }

    /// Rebuilds a session from its event log.
    pub fn from_events(events: Vec<SessionEvent>) -> Result<Session, PipelineError> {
        let state = SessionState::replay(&events).map_err(PipelineError::Invariant)?;
        Ok(Session { state, journal: events, listener: None })
    }

    /// Called with every newly recorded event (not with replayed ones).
    pub fn set_listener(&mut self, listener: impl FnMut(&SessionEvent) + Send + 'static) {
        self.listener = Some(Box::new(listener));
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn journal(&self) -> &[SessionEvent] {
        &self.journal
    }

    fn record(&mut self, event: SessionEvent) -> Result<(), PipelineError> {
        self.state.apply(&event).map_err(PipelineError::Invariant)?;
        if let Some(l) = self.listener.as_mut() {
            l(&event);
        }
        self.journal.push(event);
        Ok(())
    }

    fn ensure_open(&self) -> Result<(), PipelineError> {
        if self.state.outcome.is_some() {
            return Err(PipelineError::IllegalTransition("session already has an outcome".into()));
        }
        Ok(())
    }

    /// Runs analysis and planning if needed. Returns false when the session
    /// halted.
    fn prepare(&mut self, engine: &Engine, mode: SessionMode) -> Result<bool, PipelineError> {
        if self.state.report.is_none() {
            let mut transcript = Vec::new();
            match analyze(&self.state.request, engine, &mut transcript) {
                Ok(report) => self.record(SessionEvent::Analysis { mode, report: Some(report), error: None, transcript })?,
                Err(e) => {
                    self.record(SessionEvent::Analysis { mode, report: None, error: Some(e.to_string()), transcript })?;
                    self.halt(e.to_string())?;
                    return Ok(false);
                }
            }
        }
        if self.state.plan.is_none() {
            let report = self.state.report.clone().expect("analysis recorded");
            let mut transcript = Vec::new();
            match make_plan(&report, &self.state.request, engine, &mut transcript) {
                Ok(plan) => self.record(SessionEvent::Plan { plan: Some(plan), error: None, transcript })?,
                Err(e) => {
                    self.record(SessionEvent::Plan { plan: None, error: Some(e.to_string()), transcript })?;
                    self.halt(e.to_string())?;
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Analysis, planning and every remaining step without pausing.
    pub fn run_auto(&mut self, engine: &Engine) -> Result<(), PipelineError> {
        self.ensure_open()?;
        if !self.prepare(engine, SessionMode::Auto)? {
            return Ok(());
        }
        while let Some(id) = self.state.plan.as_ref().and_then(|p| p.next_open()).map(|s| s.id) {
            if !self.run_step(engine, id)? {
                return Ok(());
            }
        }
        self.finalize(engine)
    }

    /// Analysis and planning only; steps then wait for approval.
    pub fn run_checkpoint(&mut self, engine: &Engine) -> Result<(), PipelineError> {
        self.ensure_open()?;
        if self.state.mode.is_some() {
            return Err(PipelineError::IllegalTransition("session has already started".into()));
        }
        self.prepare(engine, SessionMode::Checkpoint).map(|_| ())
    }

    fn plan_with(&self, engine: &Engine, edits: &[StepEdit]) -> Result<super::Plan, PipelineError> {
        let mut plan = self.state.plan.clone().ok_or_else(|| PipelineError::IllegalTransition("no plan yet".into()))?;
        for e in edits {
            if plan.step(e.step_id).is_none() {
                return Err(PipelineError::NotFound(format!("step {}", e.step_id)));
            }
            e.apply_to(&mut plan).map_err(PipelineError::Invariant)?;
        }
        validate_plan(&plan, &self.state.request, &engine.registry).map_err(PipelineError::Invariant)?;
        Ok(plan)
    }

    /// Operator changes to steps that have not run yet.
    pub fn edit_plan(&mut self, engine: &Engine, edits: Vec<StepEdit>) -> Result<(), PipelineError> {
        self.ensure_open()?;
        if edits.is_empty() {
            return Err(PipelineError::BadRequest("no edits given".into()));
        }
        self.plan_with(engine, &edits)?;
        self.record(SessionEvent::Edit { edits })
    }

    /// Approves the next open step, optionally with changes, and runs it.
    pub fn approve_step(&mut self, engine: &Engine, step_id: u32, changes: Option<StepEdit>) -> Result<(), PipelineError> {
        self.ensure_open()?;
        let plan = self.state.plan.as_ref().ok_or_else(|| PipelineError::IllegalTransition("no plan yet".into()))?;
        if plan.step(step_id).is_none() {
            return Err(PipelineError::NotFound(format!("step {step_id}")));
        }
        let next = plan.next_open().map(|s| s.id);
        if next != Some(step_id) {
            return Err(PipelineError::IllegalTransition(format!("step {step_id} is not the next open step")));
        }
        if let Some(c) = &changes {
            if c.step_id != step_id {
                return Err(PipelineError::BadRequest(format!("changes target step {}, not {step_id}", c.step_id)));
            }
            self.plan_with(engine, std::slice::from_ref(c))?;
        }
        self.record(SessionEvent::Approval { step_id, changes })?;
        if !self.run_step(engine, step_id)? {
            return Ok(());
        }
        if self.state.plan.as_ref().and_then(|p| p.next_open()).is_none() {
            self.finalize(engine)?;
        }
        Ok(())
    }

    /// Solver arguments from the calculator, filling what the step leaves open.
    fn calculator_args(
        &self,
        engine: &Engine,
        step: &super::Step,
        call: &ToolCall,
        transcript: &mut Vec<TranscriptEntry>,
    ) -> Result<Map<String, Value>, PipelineError> {
        let context = format!(
            "Step {}: {}\nTool: {}\nPlanner arguments: {}",
            step.id,
            step.description,
            call.name,
            Value::Object(call.args.clone())
        );
        let prompt = fill_template(CALCULATOR_TEMPLATE, &self.state.request, &engine.registry.catalog(), &context);
        consult_json(engine, Role::Calculator, prompt, transcript, |reply| {
            let v = parse_json_reply(reply)?;
            let mut obj = v.as_object().cloned().ok_or("reply is not an object")?;
            if let Some(t) = obj.get("tool") {
                if t.as_str() != Some(call.name.as_str()) {
                    return Err(format!("tool must be `{}`", call.name));
                }
            }
            let chosen = match obj.remove("args") {
                Some(Value::Object(a)) => a,
                Some(_) => return Err("`args` must be an object".into()),
                None => {
                    obj.remove("tool");
                    obj
                }
            };
            // Arguments already on the step (planner or operator) take precedence.
            let mut merged = chosen;
            merged.extend(call.args.clone());
            engine.registry.check_args(&call.name, &merged)?;
            SolveArgs::from_args(&merged, engine)?;
            Ok(merged)
        })
    }

    /// Runs one step. Returns false (after halting) when it failed.
    fn run_step(&mut self, engine: &Engine, step_id: u32) -> Result<bool, PipelineError> {
        let step = self
            .state
            .plan
            .as_ref()
            .and_then(|p| p.step(step_id))
            .cloned()
            .ok_or_else(|| PipelineError::NotFound(format!("step {step_id}")))?;
        self.record(SessionEvent::StepStarted { step_id })?;
        let mut transcript = Vec::new();
        let attempt = (|| -> Result<_, PipelineError> {
            let mut call = step.tool.clone().ok_or_else(|| PipelineError::Tool(format!("step {step_id} has no tool")))?;
            if is_solver(&call.name) {
                call.args = self.calculator_args(engine, &step, &call, &mut transcript)?;
            }
            let mut scratch = self.state.clone();
            let mut loaded = Vec::new();
            let mut last = None;
            for _ in 0..step.control.count() {
                let r = execute(engine, &scratch, step_id, &call).map_err(PipelineError::Tool)?;
                scratch.absorb(&r);
                loaded.extend(r.loaded.iter().cloned());
                last = Some(r);
            }
            let mut result = last.ok_or_else(|| PipelineError::Tool("loop ran zero times".into()))?;
            result.iterations = step.control.count();
            result.loaded = loaded;
            Ok(result)
        })();
        match attempt {
            Ok(result) => {
                self.record(SessionEvent::StepDone { step_id, result, transcript })?;
                Ok(true)
            }
            Err(e) => {
                self.record(SessionEvent::StepFailed { step_id, error: e.to_string(), transcript })?;
                self.halt(format!("step {step_id}: {e}"))?;
                Ok(false)
            }
        }
    }

    fn halt(&mut self, error: String) -> Result<(), PipelineError> {
        let outcome = build_outcome(&self.state, None, Some(error));
        self.record(SessionEvent::Outcome { outcome, transcript: vec![] })
    }

    fn finalize(&mut self, engine: &Engine) -> Result<(), PipelineError> {
        let mut transcript = Vec::new();
        let prompt =
            fill_template(EXECUTOR_TEMPLATE, &self.state.request, &engine.registry.catalog(), &results_summary(&self.state));
        let summary = match consult_text(engine, Role::Executor, prompt, &mut transcript) {
            Ok(s) => Some(s),
            Err(e) => {
                transcript.push(TranscriptEntry::new(Role::Executor, EntryKind::Note, format!("no summary: {e}")));
                None
            }
        };
        let outcome = build_outcome(&self.state, summary, None);
        self.record(SessionEvent::Outcome { outcome, transcript })
    }

    /// Applies an action to a copy of the topology, re-solves with the last
    /// solver arguments and compares. The session's own plan is untouched.
    pub fn what_if(&mut self, engine: &Engine, action: Action) -> Result<(), PipelineError> {
        let last = self.state.last_solve.clone().ok_or_else(|| PipelineError::IllegalTransition("nothing solved yet".into()))?;
        let (Some(topology), Some(traffic)) = (&self.state.topology, &self.state.traffic) else {
            return Err(PipelineError::IllegalTransition("no topology and traffic loaded".into()));
        };
        let changed = apply_action(topology, &action).map_err(|e| match e {
            ModelError::NotFound(what) => PipelineError::NotFound(what),
            other => PipelineError::BadRequest(other.to_string()),
        })?;
        let problem = last.args.problem(changed.clone(), traffic.clone());
        let plan = run_solver(&last.tool, &last.args, &problem, engine).map_err(PipelineError::Tool)?;
        let layout = self.state.last_render.as_ref().map(|r| r.layout).unwrap_or_else(|| default_layout(&changed));
        let (dot, svg) = render(&changed, Some(&plan), layout).map_err(PipelineError::Tool)?;

        let action_cost = match &action {
            Action::AddCapacity { extra_modules, .. } => f64::from(*extra_modules) * last.args.cost.module_cost,
            Action::AddFiber { .. } => 0.0,
        };
        let old_cost = last.plan.total_cost;
        let new_cost = plan.total_cost + action_cost;
        let comparison = Comparison {
            action: action.clone(),
            old_cost,
            new_plan_cost: plan.total_cost,
            action_cost,
            new_cost,
            cost_delta: new_cost - old_cost,
            old_max_utilization: last.plan.max_utilization(),
            new_max_utilization: plan.max_utilization(),
        };
        let mut artifacts = BTreeMap::new();
        artifacts.insert("plan.json".to_string(), plan.to_json());
        artifacts.insert("topology.dot".to_string(), dot);
        artifacts.insert("topology.svg".to_string(), svg);
        let (done, total) = self.state.plan.as_ref().map(|p| (p.done_count(), p.steps.len())).unwrap_or((0, 0));
        let outcome = SessionOutcome {
            complete: true,
            completed_steps: done,
            total_steps: total,
            completion: if total == 0 { 0.0 } else { done as f64 / total as f64 },
            total_cost: Some(new_cost),
            max_utilization: Some(plan.max_utilization()),
            feasible: Some(plan.feasible),
            artifacts,
            summary: None,
            error: None,
            comparison: Some(comparison),
        };
        self.record(SessionEvent::WhatIf { action })?;
        self.record(SessionEvent::Outcome { outcome, transcript: vec![] })
    }

    /// Attaches an evaluation record to the session log.
    pub fn add_eval(&mut self, record: crate::eval::EvalRecord) -> Result<(), PipelineError> {
        self.record(SessionEvent::Eval { record })
    }
}

fn results_summary(state: &SessionState) -> String {
    let mut out = String::new();
    if let Some(plan) = &state.plan {
        for s in &plan.steps {
            let tool = s.tool.as_ref().map(|t| t.name.as_str()).unwrap_or("-");
            let detail = match state.step_results.get(&s.id).map(|r| &r.output) {
                Some(StepOutput::Topology { topology }) => {
                    format!("{} nodes, {} IP links", topology.nodes.len(), topology.ip_links.len())
                }
                Some(StepOutput::Traffic { traffic }) => format!("{} demands", traffic.demands.len()),
                Some(StepOutput::Solve(rec)) => format!(
                    "cost {}, {} new modules, max utilization {:.3}",
                    rec.plan.total_cost,
                    rec.plan.new_modules(),
                    rec.plan.max_utilization()
                ),
                Some(StepOutput::Render { layout, .. }) => format!("rendered ({})", layout.as_str()),
                Some(StepOutput::Artifact { artifact, findings }) => {
                    format!("{:?} artifact, {} findings", artifact.kind, findings.len())
                }
                Some(StepOutput::Search { hits, .. }) => format!("{} passages", hits.len()),
                Some(StepOutput::TopologyUpdated { .. }) => "topology updated".to_string(),
                None => "not run".to_string(),
            };
            out.push_str(&format!("Step {} ({tool}): {detail}\n", s.id));
        }
    }
    if let Some(solve) = &state.last_solve {
        for (id, u) in &solve.plan.utilization {
            out.push_str(&format!("Link {id}: utilization {u:.3}, {} modules\n", solve.plan.modules.get(id).copied().unwrap_or(0)));
        }
    }
    let attachments = attachment_listing(&state.request);
    if !attachments.is_empty() {
        out.push_str("Attachments:\n");
        out.push_str(&attachments);
    }
    out
}

fn build_outcome(state: &SessionState, summary: Option<String>, error: Option<String>) -> SessionOutcome {
    let (done, total) = state.plan.as_ref().map(|p| (p.done_count(), p.steps.len())).unwrap_or((0, 0));
    let all_done = total > 0 && state.plan.as_ref().is_some_and(|p| p.steps.iter().all(|s| s.status == StepStatus::Done));
    let mut artifacts = BTreeMap::new();
    if let Some(s) = &state.last_solve {
        artifacts.insert("plan.json".to_string(), s.plan.to_json());
    }
    if let Some(r) = &state.last_render {
        artifacts.insert("topology.dot".to_string(), r.dot.clone());
        artifacts.insert("topology.svg".to_string(), r.svg.clone());
    }
    for (id, r) in &state.step_results {
        match &r.output {
            StepOutput::Artifact { artifact, findings } => {
                let mut text = artifact.body.clone();
                for f in findings {
                    text.push_str(&format!("\n# {:?}: {} / {}: {}", f.kind, f.rule_a, f.rule_b, f.reason));
                }
                artifacts.insert(format!("artifact-{id}.txt"), text);
            }
            StepOutput::Search { context, .. } => {
                artifacts.insert(format!("context-{id}.txt"), context.clone());
            }
            _ => {}
        }
    }
    SessionOutcome {
        complete: error.is_none() && all_done,
        completed_steps: done,
        total_steps: total,
        completion: if total == 0 { 0.0 } else { done as f64 / total as f64 },
        total_cost: state.last_solve.as_ref().map(|s| s.plan.total_cost),
        max_utilization: state.last_solve.as_ref().map(|s| s.plan.max_utilization()),
        feasible: state.last_solve.as_ref().map(|s| s.plan.feasible),
        artifacts,
        summary,
        error,
        comparison: None,
    }
}
