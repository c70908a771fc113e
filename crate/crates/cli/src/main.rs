use std::fs;
use std::io::{self, BufRead, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use chatnet_core::capacity_solver::{brute_force_oracle, optimize, CostModel, OracleLimits, PlanningProblem};
use chatnet_core::eval::{self, ReportFormat, Rubric};
use chatnet_core::intent_compiler::{compile_intent, parse_intent_llm, parse_intent_pattern};
use chatnet_core::llm_gateway::{load_replay_script, Backend, Gateway, PromptStrategy, RagLibrary};
use chatnet_core::net_model::{parse_topology, parse_traffic_matrix, TimeWindow};
use chatnet_core::pipeline::{AnalysisRequest, Attachment, AttachmentKind, Engine, Session, SessionState};
use chatnet_core::rag_store::{augment_prompt, VectorStore, SNAPSHOT_FILE};
use chatnet_core::render::{dot_to_svg, render_dot, render_report, Layout, RenderSpec};
use chatnet_core::service::{Service, ServiceConfig};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chatnet", version, about = "Intent-driven network capacity planning")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Auto,
    Checkpoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Coords,
    Circular,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Layout {
        match l {
            LayoutArg::Coords => Layout::Coords,
            LayoutArg::Circular => Layout::Circular,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full pipeline once on a topology and traffic matrix.
    Plan {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        traffic: PathBuf,
        /// Replay script (.jsonl) or backend definition (.toml/.json).
        #[arg(long)]
        backend: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        mode: Mode,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value = "Plan the IP-layer capacity at minimum cost and draw the IP and optical topology.")]
        task: String,
        #[arg(long, default_value = "")]
        state: String,
        #[arg(long, default_value = "Link utilization must stay at or below 80% from 9 AM to 5 PM.")]
        constraints: String,
        #[arg(long, default_value_t = 0.8)]
        u_max: f64,
        /// Append every model exchange to this JSONL file.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Compile an intent sentence into a network artifact.
    Compile {
        text: String,
        /// Extract the intent with a model instead of the pattern parser.
        #[arg(long)]
        backend: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Exact minimum-cost plan by exhaustive search.
    Oracle {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        traffic: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        u_max: f64,
        #[arg(long, default_value_t = 9)]
        peak_start: u8,
        #[arg(long, default_value_t = 17)]
        peak_end: u8,
        #[arg(long, default_value_t = 3)]
        k_paths: usize,
        #[arg(long)]
        max_assignments: Option<u64>,
        /// Also run the heuristic and print both costs.
        #[arg(long)]
        compare: bool,
    },
    /// Score a corpus of role outputs and export the report.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        /// Evaluator backend: replay script (.jsonl) or backend definition.
        #[arg(long)]
        backend: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Append the scored records to this store.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Document store maintenance.
    Rag {
        #[command(subcommand)]
        command: RagCmd,
    },
    /// Draw a topology (optionally with a plan) as DOT and SVG.
    Render {
        #[arg(long)]
        topology: PathBuf,
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, value_enum)]
        layout: Option<LayoutArg>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Subcommand)]
enum RagCmd {
    /// Chunk and embed documents into a store directory.
    Ingest {
        path: PathBuf,
        #[arg(long)]
        store: PathBuf,
    },
    /// Query a store.
    Search {
        query: String,
        #[arg(long)]
        store: PathBuf,
        #[arg(short, long, default_value_t = 3)]
        k: usize,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn parse_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read(path)?;
    if path.extension().is_some_and(|e| e == "toml") {
        Ok(toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
    } else {
        Ok(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?)
    }
}

fn load_backend(path: &Path) -> Result<Backend> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        Ok(Backend::Replay { script: load_replay_script(path)?, strict: true })
    } else {
        parse_config(path)
    }
}

fn write_out(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn save_session(dir: &Path, session: &Session) -> Result<()> {
    fs::create_dir_all(dir)?;
    let st: &SessionState = session.state();
    if let Some(o) = &st.outcome {
        for (name, body) in &o.artifacts {
            write_out(dir, name, body)?;
        }
        write_out(dir, "report.md", &render_report(st)?)?;
    }
    let events: Vec<String> = session.journal().iter().map(|e| serde_json::to_string(e).expect("serializes")).collect();
    write_out(dir, "events.jsonl", &(events.join("\n") + "\n"))?;
    write_out(dir, "transcript.json", &serde_json::to_string_pretty(&st.transcript)?)?;
    Ok(())
}

fn ask(prompt: &str) -> Result<String> {
    print!("{prompt}");
    io::stdout().flush()?;
    let mut line = String::new();
    io::stdin().lock().read_line(&mut line)?;
    Ok(line.trim().to_lowercase())
}

fn plan_cmd(
    topology: PathBuf,
    traffic: PathBuf,
    backend: PathBuf,
    mode: Mode,
    out: PathBuf,
    request: (String, String, String),
    u_max: f64,
    record: Option<PathBuf>,
) -> Result<()> {
    let mut gateway = Gateway::new(load_backend(&backend)?);
    if let Some(r) = record {
        gateway = gateway.record_to(&r)?;
    }
    let mut engine = Engine::new(Arc::new(gateway));
    engine.u_max = u_max;
    let req = AnalysisRequest {
        task_text: request.0,
        state_text: request.1,
        constraint_text: request.2,
        attachments: vec![
            Attachment { name: "topology".into(), kind: AttachmentKind::Topology, path: topology.display().to_string() },
            Attachment { name: "traffic".into(), kind: AttachmentKind::Traffic, path: traffic.display().to_string() },
        ],
    };
    let mut session = Session::new("cli", req)?;
    match mode {
        Mode::Auto => session.run_auto(&engine)?,
        Mode::Checkpoint => {
            session.run_checkpoint(&engine)?;
            while session.state().outcome.is_none() {
                let Some(step) = session.state().plan.as_ref().and_then(|p| p.next_open()).cloned() else { break };
                let tool = step.tool.as_ref().map(|t| t.name.as_str()).unwrap_or("-");
                let answer = ask(&format!("step {} [{}] {}: approve? [Y/n] ", step.id, tool, step.description))?;
                if answer == "n" || answer == "no" {
                    println!("stopped before step {}", step.id);
                    break;
                }
                session.approve_step(&engine, step.id, None)?;
            }
        }
    }
    let st = session.state();
    match &st.outcome {
        Some(o) => {
            println!("completion: {}/{}", o.completed_steps, o.total_steps);
            if let Some(c) = o.total_cost {
                println!("total cost: {c:?}");
            }
            if let Some(u) = o.max_utilization {
                println!("max utilization: {u:.3}");
            }
            if let Some(e) = &o.error {
                println!("error: {e}");
            }
            if let Some(s) = &o.summary {
                println!("\n{s}\n");
            }
        }
        None => println!("session paused without an outcome"),
    }
    save_session(&out, &session)
}

fn oracle_cmd(
    topology: &Path,
    traffic: &Path,
    u_max: f64,
    window: (u8, u8),
    k_paths: usize,
    max_assignments: Option<u64>,
    compare: bool,
) -> Result<()> {
    let mut p = PlanningProblem::new(parse_topology(&read(topology)?)?, parse_traffic_matrix(&read(traffic)?)?);
    p.u_max = u_max;
    p.peak_window = TimeWindow::new(window.0, window.1).map_err(anyhow::Error::msg)?;
    p.k_paths = k_paths;
    p.cost = CostModel::default();
    let mut limits = OracleLimits::default();
    if let Some(m) = max_assignments {
        limits.max_assignments = m;
    }
    let exact = brute_force_oracle(&p, limits)?;
    println!("{}", exact.to_json());
    println!("oracle cost: {:?}", exact.total_cost);
    if compare {
        let h = optimize(&p)?;
        println!("heuristic cost: {:?}", h.total_cost);
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Cmd::Plan { topology, traffic, backend, mode, out, task, state, constraints, u_max, record } => {
            plan_cmd(topology, traffic, backend, mode, out, (task, state, constraints), u_max, record)
        }
        Cmd::Compile { text, backend, json } => {
            let intent = match backend {
                Some(b) => {
                    let gw = Gateway::new(load_backend(&b)?);
                    parse_intent_llm(&text, &gw, &PromptStrategy::default(), &RagLibrary::default())?
                }
                None => parse_intent_pattern(&text)?,
            };
            let artifact = compile_intent(&intent)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&artifact)?);
            } else {
                println!("{}", artifact.body);
            }
            Ok(())
        }
        Cmd::Oracle { topology, traffic, u_max, peak_start, peak_end, k_paths, max_assignments, compare } => {
            oracle_cmd(&topology, &traffic, u_max, (peak_start, peak_end), k_paths, max_assignments, compare)
        }
        Cmd::Eval { corpus, backend, format, records } => {
            let format: ReportFormat = format.parse().map_err(anyhow::Error::msg)?;
            let gw = Gateway::new(load_backend(&backend)?);
            let rubric = Rubric::default();
            let scored = eval::evaluate_corpus(&gw, &rubric, &eval::load_corpus(&corpus)?)?;
            if let Some(path) = records {
                for r in &scored {
                    eval::append_record(&path, r)?;
                }
            }
            print!("{}", eval::export_report(&eval::aggregate(&scored, &[]), format, &rubric));
            Ok(())
        }
        Cmd::Rag { command: RagCmd::Ingest { path, store } } => {
            let snapshot = store.join(SNAPSHOT_FILE);
            let mut vs = if snapshot.exists() { VectorStore::load(&snapshot)? } else { VectorStore::default() };
            let n = vs.ingest_path(&path)?;
            fs::create_dir_all(&store)?;
            vs.save(&snapshot)?;
            println!("ingested {n} chunks; store holds {}", vs.len());
            Ok(())
        }
        Cmd::Rag { command: RagCmd::Search { query, store, k } } => {
            let vs = VectorStore::load(&store.join(SNAPSHOT_FILE))?;
            print!("{}", augment_prompt(&vs, &query, k)?);
            Ok(())
        }
        Cmd::Render { topology, plan, layout, out } => {
            let t = parse_topology(&read(&topology)?)?;
            let plan = match plan {
                Some(p) => Some(serde_json::from_str(&read(&p)?).context("parsing plan")?),
                None => None,
            };
            let layout = layout.map(Layout::from).unwrap_or(if t.nodes.iter().all(|n| n.coords().is_some()) {
                Layout::Coords
            } else {
                Layout::Circular
            });
            let spec = RenderSpec { layout, ..RenderSpec::default() };
            let dot = render_dot(&t, plan.as_ref(), &spec)?;
            let svg = dot_to_svg(&dot, &spec)?;
            fs::create_dir_all(&out)?;
            write_out(&out, "topology.dot", &dot)?;
            write_out(&out, "topology.svg", &svg)
        }
        Cmd::Serve { config, listen } => {
            let mut cfg: ServiceConfig = parse_config(&config)?;
            if let Some(l) = listen {
                cfg.listen = l;
            }
            let addr = cfg.listen.clone();
            let service = Arc::new(Service::new(cfg)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
                log::info!("listening on {addr}");
                println!("listening on {addr}");
                axum::serve(listener, chatnet_cli::router(service)).await?;
                Ok::<_, anyhow::Error>(())
            })?;
            Ok(())
        }
    }
}
