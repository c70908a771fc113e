//! Tool catalog the planner may bind steps to, with argument schemas.

use serde::Serialize;
use serde_json::{Map, Value};

use super::StepAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgKind {
    String,
    Number,
    Integer,
    Bool,
    Object,
}

impl ArgKind {
    fn accepts(self, v: &Value) -> bool {
        match self {
            ArgKind::String => v.is_string(),
            ArgKind::Number => v.is_number(),
            ArgKind::Integer => v.is_u64() || v.as_f64().is_some_and(|f| f >= 0.0 && f.fract() == 0.0),
            ArgKind::Bool => v.is_boolean(),
            ArgKind::Object => v.is_object(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ArgSpec {
    pub name: &'static str,
    pub kind: ArgKind,
    pub required: bool,
    pub help: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ToolSpec {
    pub name: &'static str,
    pub action: StepAction,
    pub description: &'static str,
    pub args: Vec<ArgSpec>,
    /// Session inputs the tool reads: "topology", "traffic".
    pub consumes: &'static [&'static str],
    /// Session input a read tool produces.
    pub produces: Option<&'static str>,
}

const fn arg(name: &'static str, kind: ArgKind, required: bool, help: &'static str) -> ArgSpec {
    ArgSpec { name, kind, required, help }
}

fn solve_args(extra: Option<ArgSpec>) -> Vec<ArgSpec> {
    let mut v = vec![
        arg("u_max", ArgKind::Number, false, "peak utilization cap in (0,1]"),
        arg("peak_start_hour", ArgKind::Integer, false, "first hour of the peak window"),
        arg("peak_end_hour", ArgKind::Integer, false, "end hour of the peak window (exclusive)"),
        arg("k_paths", ArgKind::Integer, false, "candidate paths per demand"),
        arg("module_cost", ArgKind::Number, false, "cost per added capacity module"),
        arg("fiber_cost_per_km", ArgKind::Number, false, "cost per km of added fiber"),
        arg("fiber_fixed_cost", ArgKind::Number, false, "fixed cost per added fiber"),
    ];
    v.extend(extra);
    v
}

#[derive(Debug, Clone)]
pub struct ToolRegistry {
    tools: Vec<ToolSpec>,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        use ArgKind::*;
        let tools = vec![
            ToolSpec {
                name: "read_topology",
                action: StepAction::ReadFile,
                description: "Load the two-layer topology from an attached JSON file.",
                args: vec![arg("attachment", String, true, "name of a topology attachment")],
                consumes: &[],
                produces: Some("topology"),
            },
            ToolSpec {
                name: "read_traffic_matrix",
                action: StepAction::ReadFile,
                description: "Load demands from an attached traffic CSV file.",
                args: vec![arg("attachment", String, true, "name of a traffic attachment")],
                consumes: &[],
                produces: Some("traffic"),
            },
            ToolSpec {
                name: "solve_capacity",
                action: StepAction::CallTool,
                description: "Route every demand and size IP-link capacity modules at minimum cost.",
                args: solve_args(None),
                consumes: &["topology", "traffic"],
                produces: None,
            },
            ToolSpec {
                name: "brute_force_oracle",
                action: StepAction::CallTool,
                description: "Exact minimum-cost plan by exhaustive search (small instances only).",
                args: solve_args(Some(arg("max_assignments", Integer, false, "enumeration budget"))),
                consumes: &["topology", "traffic"],
                produces: None,
            },
            ToolSpec {
                name: "render_topology",
                action: StepAction::EmitArtifact,
                description: "Draw the IP and optical layers, colored by link congestion.",
                args: vec![arg("layout", String, false, "coords or circular")],
                consumes: &["topology"],
                produces: None,
            },
            ToolSpec {
                name: "compile_intent",
                action: StepAction::EmitArtifact,
                description: "Translate an intent sentence into a network configuration artifact.",
                args: vec![arg("text", String, false, "intent sentence; defaults to the task")],
                consumes: &[],
                produces: None,
            },
            ToolSpec {
                name: "rag_search",
                action: StepAction::CallTool,
                description: "Retrieve reference passages relevant to a query.",
                args: vec![
                    arg("query", String, false, "defaults to the task"),
                    arg("top_k", Integer, false, "number of passages"),
                    arg("store", String, false, "document store name"),
                ],
                consumes: &[],
                produces: None,
            },
            ToolSpec {
                name: "apply_action",
                action: StepAction::CallTool,
                description: "Change the topology: add a fiber or add capacity modules to an IP link.",
                args: vec![arg(
                    "action",
                    Object,
                    true,
                    "{\"type\":\"add_fiber\",\"a\",\"b\",\"length_km\"} or {\"type\":\"add_capacity\",\"ip_link_id\",\"extra_modules\"}",
                )],
                consumes: &["topology"],
                produces: None,
            },
        ];
        ToolRegistry { tools }
    }
}

impl ToolRegistry {
    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.tools.iter().map(|t| t.name)
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    /// Checks arguments against the tool schema. Unknown keys are rejected so
    /// that misspelled parameters surface instead of silently defaulting.
    pub fn check_args(&self, tool: &str, args: &Map<String, Value>) -> Result<(), String> {
        let spec = self.get(tool).ok_or_else(|| format!("unknown tool `{tool}`"))?;
        for a in &spec.args {
            match args.get(a.name) {
                Some(v) if !a.kind.accepts(v) => {
                    return Err(format!("{tool}: argument `{}` must be {:?}, got {v}", a.name, a.kind).to_lowercase())
                }
                None if a.required => return Err(format!("{tool}: missing argument `{}`", a.name)),
                _ => {}
            }
        }
        if let Some(k) = args.keys().find(|k| !spec.args.iter().any(|a| a.name == k.as_str())) {
            return Err(format!("{tool}: unknown argument `{k}`"));
        }
        Ok(())
    }

    /// Catalog text for role prompts.
    pub fn catalog(&self) -> String {
        let mut out = String::new();
        for t in &self.tools {
            let args: Vec<String> = t
                .args
                .iter()
                .map(|a| format!("{}: {}{}", a.name, format!("{:?}", a.kind).to_lowercase(), if a.required { "" } else { "?" }))
                .collect();
            out.push_str(&format!("- {} [{}] {} args: {{{}}}\n", t.name, t.action.as_str(), t.description, args.join(", ")));
        }
        out
    }
}
