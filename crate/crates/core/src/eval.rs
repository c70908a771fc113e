//! Scoring of role outputs on a six-point grid, human-intervention tallies,
//! plan-structure accuracy and report export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm_gateway::{ChatMessage, Gateway, GatewayError};
use crate::pipeline::Plan;

/// Allowed scores.
pub const GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const RECORDS_FILE: &str = "eval_records.jsonl";
pub const CSV_HEADER: &str = "module,method,mean_score,mean_hi,n";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("extraction failed: {0}")]
    ExtractionFailed(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("invalid record: {0}")]
    BadRecord(String),
    #[error("rubric has no criteria for {0}")]
    NoCriteria(Module),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Module {
    Analyzer,
    Planner,
    Calculator,
    Executor,
}

impl Module {
    pub const ALL: [Module; 4] = [Module::Analyzer, Module::Planner, Module::Calculator, Module::Executor];

    pub fn as_str(self) -> &'static str {
        match self {
            Module::Analyzer => "analyzer",
            Module::Planner => "planner",
            Module::Calculator => "calculator",
            Module::Executor => "executor",
        }
    }

    pub fn parse(s: &str) -> Option<Module> {
        Module::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl std::fmt::Display for Module {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ZeroShot,
    FewShot,
    Cot,
    Rag,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::ZeroShot, Method::FewShot, Method::Cot, Method::Rag];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::ZeroShot => "zero_shot",
            Method::FewShot => "few_shot",
            Method::Cot => "cot",
            Method::Rag => "rag",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evaluator {
    Llm,
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub module: Module,
    pub method: Method,
    pub score: f64,
    pub hi: u32,
    pub task_id: String,
    pub evaluator: Evaluator,
    #[serde(default)]
    pub notes: String,
}

impl EvalRecord {
    pub fn check(&self) -> Result<(), EvalError> {
        if !on_grid(self.score) {
            return Err(EvalError::BadRecord(format!("score {} is not one of {GRID:?}", self.score)));
        }
        if self.task_id.trim().is_empty() {
            return Err(EvalError::BadRecord("task_id is empty".into()));
        }
        Ok(())
    }
}

pub fn on_grid(score: f64) -> bool {
    GRID.contains(&score)
}

/// Nearest grid value after clamping to [0,1]; halfway points go up.
pub fn snap(x: f64) -> f64 {
    let scaled = x.clamp(0.0, 1.0) * 5.0;
    let base = scaled.floor();
    let up = scaled - base >= 0.5 - 1e-9;
    let idx = (base as usize + usize::from(up)).min(5);
    GRID[idx]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub score: f64,
    pub meaning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rubric {
    pub anchors: Vec<Anchor>,
    pub criteria: BTreeMap<Module, String>,
}

impl Default for Rubric {
    fn default() -> Self {
        let anchors = [
            (1.0, "matches expectations to a high degree"),
            (0.8, "matches expectations to a high degree"),
            (0.6, "matches expectations to a moderate degree"),
            (0.4, "matches expectations to a just adequate degree"),
            (0.2, "does not match expectations"),
            (0.0, "unusable"),
        ]
        .into_iter()
        .map(|(score, m)| Anchor { score, meaning: m.to_string() })
        .collect();
        let criteria = BTreeMap::from([
            (
                Module::Analyzer,
                "Explains the networking concepts involved, judges feasibility correctly and names the tools the task needs."
                    .to_string(),
            ),
            (
                Module::Planner,
                "Breaks the task into ordered, executable steps bound to the right tools, with no missing or spurious steps."
                    .to_string(),
            ),
            (
                Module::Calculator,
                "States the correct optimization model and constraints and supplies solver parameters that match the task."
                    .to_string(),
            ),
            (
                Module::Executor,
                "Reports the solution faithfully: capacities, cost, congestion and the produced artifacts.".to_string(),
            ),
        ]);
        Rubric { anchors, criteria }
    }
}

impl Rubric {
    pub fn check(&self) -> Result<(), EvalError> {
        match self.anchors.iter().find(|a| !on_grid(a.score)) {
            Some(a) => Err(EvalError::BadRecord(format!("anchor {} is off the grid", a.score))),
            None => Ok(()),
        }
    }

    pub fn legend(&self) -> String {
        self.anchors.iter().map(|a| format!("{:.1}: {}", a.score, a.meaning)).collect::<Vec<_>>().join("\n")
    }
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?|\.\d+").expect("valid regex"))
}

/// First number in the reply that lies in [0,1].
pub fn parse_score(reply: &str) -> Option<f64> {
    number_re()
        .find_iter(reply)
        .filter_map(|m| m.as_str().parse::<f64>().ok())
        .find(|v| (0.0..=1.0).contains(v))
}

pub fn evaluator_prompt(rubric: &Rubric, module: Module, method: Method, task_id: &str, output: &str) -> Result<String, EvalError> {
    let criteria = rubric.criteria.get(&module).ok_or(EvalError::NoCriteria(module))?;
    Ok(format!(
        "[role:evaluator]\ntask: {task_id}\nmodule: {module}\nmethod: {}\n\nCriteria:\n{criteria}\n\nScale:\n{}\n\nOutput to score:\n{output}\n\nReply with a single score from the scale.",
        method.as_str(),
        rubric.legend()
    ))
}

/// Asks the evaluator model for a score. Off-grid answers are snapped with a
/// note; a reply without a usable number gets one reprompt.
pub fn score_output(
    gateway: &Gateway,
    rubric: &Rubric,
    module: Module,
    method: Method,
    task_id: &str,
    output: &str,
    hi: u32,
) -> Result<EvalRecord, EvalError> {
    let prompt = evaluator_prompt(rubric, module, method, task_id, output)?;
    let mut messages = vec![ChatMessage::system("You are a strict evaluator of network planning outputs."), ChatMessage::user(prompt)];
    let first = gateway.complete(&messages)?;
    let raw = match parse_score(&first.content) {
        Some(v) => v,
        None => {
            messages.push(first);
            messages.push(ChatMessage::user(format!(
                "[role:evaluator] task: {task_id} module: {module} method: {} Your previous reply was invalid: no score between 0 and 1. Reply with only the score.",
                method.as_str()
            )));
            let second = gateway.complete(&messages)?;
            parse_score(&second.content)
                .ok_or_else(|| EvalError::ExtractionFailed(format!("evaluator gave no score for {task_id}")))?
        }
    };
    let score = snap(raw);
    let notes = if score == raw { String::new() } else { format!("snapped {raw} to {score}") };
    Ok(EvalRecord { module, method, score, hi, task_id: task_id.to_string(), evaluator: Evaluator::Llm, notes })
}

/// One output awaiting a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub task_id: String,
    pub module: Module,
    pub method: Method,
    pub output: String,
    #[serde(default)]
    pub hi: u32,
}

pub fn load_corpus(path: &Path) -> Result<Vec<CorpusItem>, EvalError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Parse(format!("line {}: {e}", i + 1))))
        .collect()
}

pub fn evaluate_corpus(gateway: &Gateway, rubric: &Rubric, items: &[CorpusItem]) -> Result<Vec<EvalRecord>, EvalError> {
    items
        .iter()
        .map(|it| score_output(gateway, rubric, it.module, it.method, &it.task_id, &it.output, it.hi))
        .collect()
}

/// Longest common subsequence of (action, tool) pairs over the golden length.
pub fn hlp_accuracy(plan: &Plan, golden: &Plan) -> f64 {
    let key = |p: &Plan| -> Vec<(&'static str, String)> {
        p.steps.iter().map(|s| (s.action.as_str(), s.tool.as_ref().map(|t| t.name.clone()).unwrap_or_default())).collect()
    };
    let (a, b) = (key(plan), key(golden));
    if b.is_empty() {
        return if a.is_empty() { 1.0 } else { 0.0 };
    }
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            dp[i][j] = if a[i - 1] == b[j - 1] { dp[i - 1][j - 1] + 1 } else { dp[i - 1][j].max(dp[i][j - 1]) };
        }
    }
    dp[a.len()][b.len()] as f64 / b.len() as f64
}

/// Per-session inputs to the task-level metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionTally {
    pub complete: bool,
    pub hlp_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub module: Module,
    pub method: Method,
    pub mean_score: f64,
    pub mean_hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalSummary {
    /// Only cells with at least one record, in (module, method) order.
    pub cells: Vec<Cell>,
    #[serde(default)]
    pub hlp_accuracy: Option<f64>,
    #[serde(default)]
    pub completion_rate: Option<f64>,
}

impl EvalSummary {
    pub fn cell(&self, module: Module, method: Method) -> Option<&Cell> {
        self.cells.iter().find(|c| c.module == module && c.method == method)
    }

    /// Mean score over all of a module's records.
    pub fn module_mean(&self, module: Module) -> Option<f64> {
        let (sum, n) = self
            .cells
            .iter()
            .filter(|c| c.module == module)
            .fold((0.0, 0usize), |(s, n), c| (s + c.mean_score * c.n as f64, n + c.n));
        (n > 0).then(|| sum / n as f64)
    }
}

pub fn aggregate(records: &[EvalRecord], sessions: &[SessionTally]) -> EvalSummary {
    let mut groups: BTreeMap<(Module, Method), (f64, f64, usize)> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.module, r.method)).or_default();
        g.0 += r.score;
        g.1 += f64::from(r.hi);
        g.2 += 1;
    }
    let cells = groups
        .into_iter()
        .map(|((module, method), (s, h, n))| Cell { module, method, mean_score: s / n as f64, mean_hi: h / n as f64, n })
        .collect();
    let completion_rate =
        (!sessions.is_empty()).then(|| sessions.iter().filter(|s| s.complete).count() as f64 / sessions.len() as f64);
    let hlp: Vec<f64> = sessions.iter().filter_map(|s| s.hlp_accuracy).collect();
    let hlp_accuracy = (!hlp.is_empty()).then(|| hlp.iter().sum::<f64>() / hlp.len() as f64);
    EvalSummary { cells, hlp_accuracy, completion_rate }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format `{other}`")),
        }
    }
}

pub fn export_report(summary: &EvalSummary, format: ReportFormat, rubric: &Rubric) -> String {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
            for c in &summary.cells {
                w.write_record([
                    c.module.as_str().to_string(),
                    c.method.as_str().to_string(),
                    c.mean_score.to_string(),
                    c.mean_hi.to_string(),
                    c.n.to_string(),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
        }
        ReportFormat::Json => serde_json::to_string_pretty(summary).expect("summary serializes"),
        ReportFormat::Markdown => {
            let mut md = String::from("# Evaluation report\n\n| Module | Method | Mean score | Mean HI | n |\n|---|---|---|---|---|\n");
            for c in &summary.cells {
                let _ = writeln!(md, "| {} | {} | {:.3} | {:.2} | {} |", c.module, c.method.as_str(), c.mean_score, c.mean_hi, c.n);
            }
            if let Some(h) = summary.hlp_accuracy {
                let _ = writeln!(md, "\nHLP accuracy: {h:.3}");
            }
            if let Some(c) = summary.completion_rate {
                let _ = writeln!(md, "\nCompleted tasks: {:.1}%", c * 100.0);
            }
            md.push_str("\n## Score anchors\n\n");
            for a in &rubric.anchors {
                let _ = writeln!(md, "- {:.1}: {}", a.score, a.meaning);
            }
            md
        }
    }
}

#[derive(Deserialize)]
struct CsvRow {
    module: String,
    method: String,
    mean_score: f64,
    mean_hi: f64,
    n: usize,
}

/// Inverse of [`export_report`] for CSV (cells only) and JSON.
pub fn parse_report(text: &str, format: ReportFormat) -> Result<EvalSummary, EvalError> {
    match format {
        ReportFormat::Json => serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string())),
        ReportFormat::Csv => {
            let mut rdr = csv::Reader::from_reader(text.as_bytes());
            let headers = rdr.headers().map_err(|e| EvalError::Parse(e.to_string()))?.iter().collect::<Vec<_>>().join(",");
            if headers != CSV_HEADER {
                return Err(EvalError::Parse(format!("unexpected header `{headers}`")));
            }
            let mut cells = Vec::new();
            for row in rdr.deserialize::<CsvRow>() {
                let row = row.map_err(|e| EvalError::Parse(e.to_string()))?;
                let module = Module::parse(&row.module).ok_or_else(|| EvalError::Parse(format!("module `{}`", row.module)))?;
                let method = Method::parse(&row.method).ok_or_else(|| EvalError::Parse(format!("method `{}`", row.method)))?;
                cells.push(Cell { module, method, mean_score: row.mean_score, mean_hi: row.mean_hi, n: row.n });
            }
            Ok(EvalSummary { cells, hlp_accuracy: None, completion_rate: None })
        }
        ReportFormat::Markdown => Err(EvalError::Parse("markdown reports are not parsed".into())),
    }
}

pub fn append_record(path: &Path, record: &EvalRecord) -> Result<(), EvalError> {
    record.check()?;
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(record).expect("record serializes"))?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: EvalRecord = serde_json::from_str(line).map_err(|e| EvalError::Parse(format!("line {}: {e}", i + 1)))?;
        r.check()?;
        out.push(r);
    }
    Ok(out)
}
