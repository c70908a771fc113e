//! Native tool dispatch for plan steps.

use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{AnalysisRequest, AttachmentKind, Engine, SessionState, ToolCall};
use crate::capacity_solver::{brute_force_oracle, optimize, CapacityPlan, CostModel, OracleLimits, PlanningProblem};
use crate::intent_compiler::{compile_intent, parse_intent_pattern, verify_artifacts, Conflict, NetworkArtifact};
use crate::net_model::{apply_action, parse_topology, parse_traffic_matrix, Action, TimeWindow, Topology, TrafficMatrix};
use crate::rag_store::{augment_prompt, VectorStore};
use crate::render::{dot_to_svg, render_dot, Layout, RenderSpec};

/// Resolves an attachment path. With a root, the path must stay inside it
/// after symlinks are followed; `..` components are refused outright.
pub fn resolve_attachment(root: Option<&Path>, path: &str) -> Result<PathBuf, String> {
    let p = Path::new(path);
    let Some(root) = root else {
        return Ok(p.to_path_buf());
    };
    if p.components().any(|c| matches!(c, Component::ParentDir)) {
        return Err(format!("attachment path `{path}` leaves the data directory"));
    }
    let joined = if p.is_absolute() { p.to_path_buf() } else { root.join(p) };
    let canon_root = root.canonicalize().map_err(|e| format!("{}: {e}", root.display()))?;
    let canon = joined.canonicalize().map_err(|e| format!("attachment `{path}`: {e}"))?;
    if !canon.starts_with(&canon_root) {
        return Err(format!("attachment path `{path}` leaves the data directory"));
    }
    Ok(canon)
}

/// Effective solver arguments after defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveArgs {
    pub u_max: f64,
    pub peak_window: TimeWindow,
    pub k_paths: usize,
    pub cost: CostModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_assignments: Option<u64>,
}

impl SolveArgs {
    pub fn from_args(args: &Map<String, Value>, engine: &Engine) -> Result<SolveArgs, String> {
        let num = |k: &str| args.get(k).and_then(Value::as_f64);
        let int = |k: &str| args.get(k).and_then(Value::as_f64).map(|f| f as u64);
        let u_max = num("u_max").unwrap_or(engine.u_max);
        if !(u_max > 0.0 && u_max <= 1.0) {
            return Err(format!("u_max {u_max} outside (0,1]"));
        }
        let start = int("peak_start_hour").unwrap_or(u64::from(TimeWindow::BUSINESS_HOURS.start_hour));
        let end = int("peak_end_hour").unwrap_or(u64::from(TimeWindow::BUSINESS_HOURS.end_hour));
        let peak_window = TimeWindow::new(start.min(255) as u8, end.min(255) as u8)?;
        let k_paths = int("k_paths").unwrap_or(3) as usize;
        if k_paths == 0 {
            return Err("k_paths must be at least 1".into());
        }
        let mut cost = engine.cost.clone();
        for (key, slot) in [
            ("module_cost", &mut cost.module_cost),
            ("fiber_cost_per_km", &mut cost.fiber_cost_per_km),
            ("fiber_fixed_cost", &mut cost.fiber_fixed_cost),
        ] {
            if let Some(v) = num(key) {
                if v < 0.0 {
                    return Err(format!("{key} must be nonnegative"));
                }
                *slot = v;
            }
        }
        Ok(SolveArgs { u_max, peak_window, k_paths, cost, max_assignments: int("max_assignments") })
    }

    pub fn problem(&self, topology: Topology, traffic: TrafficMatrix) -> PlanningProblem {
        PlanningProblem { topology, traffic, u_max: self.u_max, peak_window: self.peak_window, cost: self.cost.clone(), k_paths: self.k_paths }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub tool: String,
    pub args: SolveArgs,
    pub plan: CapacityPlan,
}

pub(crate) fn run_solver(tool: &str, args: &SolveArgs, p: &PlanningProblem, engine: &Engine) -> Result<CapacityPlan, String> {
    let res = if tool == "brute_force_oracle" {
        let mut limits = engine.oracle_limits;
        if let Some(m) = args.max_assignments {
            limits = OracleLimits { max_assignments: m, ..limits };
        }
        brute_force_oracle(p, limits)
    } else {
        optimize(p)
    };
    res.map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHitSummary {
    pub source: String,
    pub position: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StepOutput {
    Topology { topology: Topology },
    Traffic { traffic: TrafficMatrix },
    Solve(SolveRecord),
    Render { layout: Layout, dot: String, svg: String },
    Artifact { artifact: NetworkArtifact, findings: Vec<Conflict> },
    Search { hits: Vec<SearchHitSummary>, context: String },
    TopologyUpdated { action: Action, topology: Topology },
}

/// Inputs a step had to load from attachments because no read step ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LoadedInput {
    Topology { topology: Topology },
    Traffic { traffic: TrafficMatrix },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub step_id: u32,
    pub iterations: u32,
    pub output: StepOutput,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loaded: Vec<LoadedInput>,
}

fn read_attachment(request: &AnalysisRequest, engine: &Engine, name: &str, kind: AttachmentKind) -> Result<String, String> {
    let att = request.attachment(name).ok_or_else(|| format!("no attachment named `{name}`"))?;
    if att.kind != kind {
        return Err(format!("attachment `{name}` is {:?}, expected {kind:?}", att.kind));
    }
    let path = resolve_attachment(engine.workspace.as_deref(), &att.path)?;
    fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_topology(request: &AnalysisRequest, engine: &Engine, name: &str) -> Result<Topology, String> {
    parse_topology(&read_attachment(request, engine, name, AttachmentKind::Topology)?).map_err(|e| e.to_string())
}

fn load_traffic(request: &AnalysisRequest, engine: &Engine, name: &str) -> Result<TrafficMatrix, String> {
    parse_traffic_matrix(&read_attachment(request, engine, name, AttachmentKind::Traffic)?).map_err(|e| e.to_string())
}

/// Session topology, loading the first topology attachment when no read
/// step has run yet.
fn topology_of(state: &SessionState, engine: &Engine, loaded: &mut Vec<LoadedInput>) -> Result<Topology, String> {
    if let Some(t) = &state.topology {
        return Ok(t.clone());
    }
    let att = state.request.first_of(AttachmentKind::Topology).ok_or("no topology loaded or attached")?;
    let t = load_topology(&state.request, engine, &att.name)?;
    loaded.push(LoadedInput::Topology { topology: t.clone() });
    Ok(t)
}

fn traffic_of(state: &SessionState, engine: &Engine, loaded: &mut Vec<LoadedInput>) -> Result<TrafficMatrix, String> {
    if let Some(t) = &state.traffic {
        return Ok(t.clone());
    }
    let att = state.request.first_of(AttachmentKind::Traffic).ok_or("no traffic matrix loaded or attached")?;
    let t = load_traffic(&state.request, engine, &att.name)?;
    loaded.push(LoadedInput::Traffic { traffic: t.clone() });
    Ok(t)
}

pub(crate) fn default_layout(t: &Topology) -> Layout {
    if t.nodes.iter().all(|n| n.coords().is_some()) { Layout::Coords } else { Layout::Circular }
}

pub(crate) fn render(t: &Topology, plan: Option<&CapacityPlan>, layout: Layout) -> Result<(String, String), String> {
    let spec = RenderSpec { layout, ..RenderSpec::default() };
    let dot = render_dot(t, plan, &spec).map_err(|e| e.to_string())?;
    let svg = dot_to_svg(&dot, &spec).map_err(|e| e.to_string())?;
    Ok((dot, svg))
}

fn str_arg<'a>(call: &'a ToolCall, key: &str) -> Option<&'a str> {
    call.args.get(key).and_then(Value::as_str)
}

/// Runs one tool invocation against a state snapshot. `args` are the
/// effective arguments (planner arguments merged with calculator choices).
pub(crate) fn execute(
    engine: &Engine,
    state: &SessionState,
    step_id: u32,
    call: &ToolCall,
) -> Result<StepResult, String> {
    engine.registry.check_args(&call.name, &call.args)?;
    let mut loaded = Vec::new();
    let output = match call.name.as_str() {
        "read_topology" => {
            let name = str_arg(call, "attachment").unwrap_or_default();
            StepOutput::Topology { topology: load_topology(&state.request, engine, name)? }
        }
        "read_traffic_matrix" => {
            let name = str_arg(call, "attachment").unwrap_or_default();
            StepOutput::Traffic { traffic: load_traffic(&state.request, engine, name)? }
        }
        "solve_capacity" | "brute_force_oracle" => {
            let args = SolveArgs::from_args(&call.args, engine)?;
            let topology = topology_of(state, engine, &mut loaded)?;
            let traffic = traffic_of(state, engine, &mut loaded)?;
            let plan = run_solver(&call.name, &args, &args.problem(topology, traffic), engine)?;
            StepOutput::Solve(SolveRecord { tool: call.name.clone(), args, plan })
        }
        "render_topology" => {
            let topology = topology_of(state, engine, &mut loaded)?;
            let layout = match str_arg(call, "layout") {
                None => default_layout(&topology),
                Some("coords") => Layout::Coords,
                Some("circular") => Layout::Circular,
                Some(other) => return Err(format!("unknown layout `{other}`")),
            };
            let (dot, svg) = render(&topology, state.last_solve.as_ref().map(|s| &s.plan), layout)?;
            StepOutput::Render { layout, dot, svg }
        }
        "compile_intent" => {
            let text = str_arg(call, "text").unwrap_or(&state.request.task_text);
            let intent = parse_intent_pattern(text).map_err(|e| e.to_string())?;
            let artifact = compile_intent(&intent).map_err(|e| e.to_string())?;
            let mut all: Vec<NetworkArtifact> = state.artifacts().cloned().collect();
            all.push(artifact.clone());
            let findings = verify_artifacts(&all).map_err(|e| e.to_string())?;
            StepOutput::Artifact { artifact, findings }
        }
        "rag_search" => {
            let query = str_arg(call, "query").unwrap_or(&state.request.task_text);
            let top_k = call.args.get("top_k").and_then(Value::as_u64).unwrap_or(3) as usize;
            let local;
            let store = match str_arg(call, "store") {
                Some(name) if name != "attachments" => engine.rag.get(name).ok_or_else(|| format!("no document store `{name}`"))?,
                named => {
                    let docs: Vec<_> = state.request.attachments.iter().filter(|a| a.kind == AttachmentKind::Document).collect();
                    if named.is_none() && docs.is_empty() {
                        engine.rag.get("default").ok_or("no document store available")?
                    } else {
                        let mut s = VectorStore::default();
                        for a in docs {
                            let text = read_attachment(&state.request, engine, &a.name, AttachmentKind::Document)?;
                            s.add_document(&a.name, &text).map_err(|e| e.to_string())?;
                        }
                        local = s;
                        &local
                    }
                }
            };
            let hits = store.search(query, top_k.max(1)).map_err(|e| e.to_string())?;
            let context = augment_prompt(store, query, top_k.max(1)).map_err(|e| e.to_string())?;
            StepOutput::Search {
                hits: hits.iter().map(|h| SearchHitSummary { source: h.chunk.source.clone(), position: h.chunk.position, score: h.score }).collect(),
                context,
            }
        }
        "apply_action" => {
            let action: Action = serde_json::from_value(call.args.get("action").cloned().unwrap_or_default())
                .map_err(|e| format!("bad action: {e}"))?;
            let topology = topology_of(state, engine, &mut loaded)?;
            let topology = apply_action(&topology, &action).map_err(|e| e.to_string())?;
            StepOutput::TopologyUpdated { action, topology }
        }
        other => return Err(format!("unknown tool `{other}`")),
    };
    Ok(StepResult { step_id, iterations: 1, output, loaded })
}
