//! Markdown summary of a finished session.

use std::fmt::Write as _;

use super::RenderError;
use crate::pipeline::{SessionState, StepOutput};

fn or_none(s: &str) -> &str {
    if s.trim().is_empty() { "(none)" } else { s }
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

pub fn render_report(state: &SessionState) -> Result<String, RenderError> {
    let outcome = state.outcome.as_ref().ok_or(RenderError::NoOutcome)?;
    let mut md = String::new();
    let r = &state.request;
    let _ = writeln!(md, "# Session {}\n", state.id);
    let _ = writeln!(md, "## Request\n");
    let _ = writeln!(md, "- Task: {}", r.task_text.trim());
    let _ = writeln!(md, "- Network state: {}", or_none(&r.state_text).trim());
    let _ = writeln!(md, "- Constraints: {}", or_none(&r.constraint_text).trim());
    for a in &r.attachments {
        let _ = writeln!(md, "- Attachment `{}` ({:?}): {}", a.name, a.kind, a.path);
    }

    md.push_str("\n## Analysis\n\n");
    match &state.report {
        Some(rep) => {
            let _ = writeln!(md, "- Feasible: {}", rep.feasible);
            let _ = writeln!(md, "- Concepts: {}", or_none(&rep.concepts.join(", ")));
            let _ = writeln!(md, "- Required tools: {}", or_none(&rep.required_tools.join(", ")));
            let _ = writeln!(md, "- Rationale: {}", or_none(&rep.rationale));
            for w in &rep.warnings {
                let _ = writeln!(md, "- Warning: {w}");
            }
        }
        None => md.push_str("No analysis was produced.\n"),
    }

    md.push_str("\n## Plan\n\n");
    match &state.plan {
        Some(plan) => {
            md.push_str("| Step | Action | Tool | Control | Status |\n|---|---|---|---|---|\n");
            for s in &plan.steps {
                let tool = s.tool.as_ref().map(|t| t.name.as_str()).unwrap_or("-");
                let control = match s.control {
                    crate::pipeline::Control::Sequence => "sequence".to_string(),
                    crate::pipeline::Control::Loop { count } => format!("loop x{count}"),
                };
                let _ = writeln!(
                    md,
                    "| {} {} | {} | {} | {} | {:?} |",
                    s.id,
                    cell(&s.description),
                    s.action.as_str(),
                    tool,
                    control,
                    s.status
                );
            }
            for (id, err) in &state.step_errors {
                let _ = writeln!(md, "\nStep {id} failed: {err}");
            }
        }
        None => md.push_str("No plan was produced.\n"),
    }

    md.push_str("\n## Cost breakdown\n\n");
    match &state.last_solve {
        Some(solve) => {
            let p = &solve.plan;
            let c = &solve.args.cost;
            let new_modules = p.new_modules();
            let _ = writeln!(
                md,
                "- New capacity modules: {new_modules} x {} = {:?} {}",
                c.module_cost,
                new_modules as f64 * c.module_cost,
                c.currency
            );
            for f in &p.added_fibers {
                let _ = writeln!(md, "- Added fiber {} ({} km): {:?} {}", f.fiber_id, f.length_km, f.cost(c), c.currency);
            }
            let _ = writeln!(md, "- Total cost: {:?} {}", p.total_cost, c.currency);
            let _ = writeln!(md, "- Max utilization: {:.3} (cap {})", p.max_utilization(), p.u_max);
            let _ = writeln!(md, "- Feasible: {}", p.feasible);
            md.push_str("\n| Link | Load (Gbps) | Modules | Utilization |\n|---|---|---|---|\n");
            for (id, u) in &p.utilization {
                let _ = writeln!(
                    md,
                    "| {id} | {} | {} | {:.3} |",
                    p.link_load_gbps.get(id).copied().unwrap_or(0.0),
                    p.modules.get(id).copied().unwrap_or(0),
                    u
                );
            }
        }
        None => md.push_str("No capacity plan was solved.\n"),
    }

    md.push_str("\n## Outcome\n\n");
    let _ = writeln!(md, "- HI: {}", state.hi_count);
    let flag = if outcome.complete { "" } else { " (incomplete)" };
    let _ = writeln!(
        md,
        "- Completion: {}/{} = {:.2}{flag}",
        outcome.completed_steps, outcome.total_steps, outcome.completion
    );
    if let Some(e) = &outcome.error {
        let _ = writeln!(md, "- Error: {e}");
    }
    if let Some(s) = &outcome.summary {
        let _ = writeln!(md, "\n{}", s.trim());
    }

    if !state.what_ifs.is_empty() {
        md.push_str("\n## What-if\n\n");
        for (i, w) in state.what_ifs.iter().enumerate() {
            let action = serde_json::to_string(&w.action).unwrap_or_default();
            match w.outcome.as_ref().and_then(|o| o.comparison.as_ref()) {
                Some(c) => {
                    let _ = writeln!(
                        md,
                        "{}. `{action}`: cost {:?} -> {:?} (delta {:?}), max utilization {:.3} -> {:.3}",
                        i + 1,
                        c.old_cost,
                        c.new_cost,
                        c.cost_delta,
                        c.old_max_utilization,
                        c.new_max_utilization
                    );
                }
                None => {
                    let _ = writeln!(md, "{}. `{action}`: no result", i + 1);
                }
            }
        }
    }

    md.push_str("\n## Artifacts\n\n");
    for name in outcome.artifacts.keys() {
        let _ = writeln!(md, "- {name}");
    }
    for (id, r) in &state.step_results {
        if let StepOutput::Artifact { findings, .. } = &r.output {
            for f in findings {
                let _ = writeln!(md, "- step {id} finding {:?}: {}", f.kind, f.reason);
            }
        }
    }
    Ok(md)
}
