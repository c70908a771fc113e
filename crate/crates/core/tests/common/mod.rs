#![allow(dead_code)]
pub mod strategies;
pub mod plan_check;

use std::path::PathBuf;
use std::sync::Arc;

use chatnet_core::llm_gateway::{load_replay_script, Gateway, ReplayEntry};
use chatnet_core::pipeline::{AnalysisRequest, Attachment, AttachmentKind, Engine};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn capacity_script() -> Vec<ReplayEntry> {
    load_replay_script(&fixture("capacity_replay.jsonl")).unwrap()
}

pub fn engine_with(script: Vec<ReplayEntry>) -> Engine {
    let mut e = Engine::new(Arc::new(Gateway::replay(script)));
    e.workspace = Some(fixture(""));
    e
}

pub fn capacity_engine() -> Engine {
    engine_with(capacity_script())
}

pub fn capacity_request() -> AnalysisRequest {
    AnalysisRequest {
        task_text: "Plan the IP-layer capacity of the backbone at minimum cost and draw the IP and optical topology.".into(),
        state_text: "Three core routers A, B and C joined by 100 km fibers; no capacity modules installed.".into(),
        constraint_text: "Link utilization must stay at or below 80% from 9 AM to 5 PM.".into(),
        attachments: vec![
            Attachment { name: "topology".into(), kind: AttachmentKind::Topology, path: "triangle.json".into() },
            Attachment { name: "traffic".into(), kind: AttachmentKind::Traffic, path: "traffic.csv".into() },
        ],
    }
}

/// Scores the evaluation scenario corpus with its scripted evaluator.
pub fn scenario_records() -> Vec<chatnet_core::eval::EvalRecord> {
    use chatnet_core::eval::{evaluate_corpus, load_corpus, Rubric};
    let gw = Gateway::replay(load_replay_script(&fixture("evaluator_replay.jsonl")).unwrap());
    evaluate_corpus(&gw, &Rubric::default(), &load_corpus(&fixture("eval_corpus.jsonl")).unwrap()).unwrap()
}
