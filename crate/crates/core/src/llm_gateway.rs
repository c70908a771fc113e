//! Chat-completion access and prompt construction.
//!
//! A [`Gateway`] wraps one [`Backend`]: a remote chat-completions endpoint or
//! a deterministic replay script. Replay makes every completion a pure
//! function of the last user message, which is what the end-to-end tests run
//! on. Any gateway can be wrapped by [`Gateway::record_to`] to append each
//! exchange to a JSONL file that loads back as a replay script.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rag_store::{augment_prompt, VectorStore};

pub const DEFAULT_COT_PREAMBLE: &str = "Let us reason step by step.";
pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a network engineering assistant.";
/// Lenient replay answer when no script entry matches.
pub const REPLAY_NO_MATCH: &str = "REPLAY_NO_MATCH";
const TRANSPORT_RETRIES: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: ChatRole::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: ChatRole::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: ChatRole::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PromptStrategy {
    #[default]
    ZeroShot,
    FewShot { examples: Vec<FewShotExample> },
    ChainOfThought {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step_preamble: Option<String>,
    },
    Rag { store_ref: String, top_k: usize },
}

impl PromptStrategy {
    pub fn cot() -> Self {
        PromptStrategy::ChainOfThought { step_preamble: None }
    }
}

/// Named vector stores that `Rag` strategies refer to.
#[derive(Debug, Clone, Default)]
pub struct RagLibrary {
    stores: BTreeMap<String, VectorStore>,
}

impl RagLibrary {
    pub fn insert(&mut self, name: impl Into<String>, store: VectorStore) {
        self.stores.insert(name.into(), store);
    }

    pub fn get(&self, name: &str) -> Option<&VectorStore> {
        self.stores.get(name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("task text is empty")]
    EmptyTask,
    #[error("few-shot prompts take 1 to 3 examples, got {0}")]
    FewShotCount(usize),
    #[error("rag top_k must be at least 1")]
    ZeroTopK,
}

/// Builds the message list for a strategy. `context` becomes the system
/// message (a default one when empty).
pub fn build_prompt(
    strategy: &PromptStrategy,
    task: &str,
    context: &str,
    stores: &RagLibrary,
) -> Result<Vec<ChatMessage>, PromptError> {
    if task.trim().is_empty() {
        return Err(PromptError::EmptyTask);
    }
    let system = if context.trim().is_empty() { DEFAULT_SYSTEM_PROMPT } else { context };
    let messages = match strategy {
        PromptStrategy::ZeroShot => vec![ChatMessage::system(system), ChatMessage::user(task)],
        PromptStrategy::FewShot { examples } => {
            if !(1..=3).contains(&examples.len()) {
                return Err(PromptError::FewShotCount(examples.len()));
            }
            let mut m = vec![ChatMessage::system(system)];
            for ex in examples {
                m.push(ChatMessage::user(&ex.input));
                m.push(ChatMessage::assistant(&ex.output));
            }
            m.push(ChatMessage::user(task));
            m
        }
        PromptStrategy::ChainOfThought { step_preamble } => {
            let preamble = step_preamble.as_deref().unwrap_or(DEFAULT_COT_PREAMBLE);
            vec![ChatMessage::system(system), ChatMessage::user(format!("{task}\n\n{preamble}"))]
        }
        PromptStrategy::Rag { store_ref, top_k } => {
            if *top_k == 0 {
                return Err(PromptError::ZeroTopK);
            }
            let block = match stores.get(store_ref) {
                Some(store) => augment_prompt(store, task, *top_k).unwrap_or_else(|_| crate::rag_store::empty_context_block()),
                None => crate::rag_store::empty_context_block(),
            };
            vec![ChatMessage::system(format!("{system}\n\n{block}")), ChatMessage::user(task)]
        }
    };
    Ok(messages)
}

fn default_max_tokens() -> u32 {
    4096
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    #[serde(rename = "match")]
    pub r#match: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Backend {
    Remote(RemoteConfig),
    Replay {
        script: Vec<ReplayEntry>,
        #[serde(default = "strict_default")]
        strict: bool,
    },
}

fn strict_default() -> bool {
    true
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no replay entry matches {0:?}")]
    ReplayMiss(String),
    #[error("prompt needs ~{estimated} tokens, budget is {limit}")]
    PromptTooLarge { estimated: usize, limit: u32 },
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("cannot write session log: {0}")]
    Sink(String),
    #[error("invalid backend config: {0}")]
    Config(String),
}

/// Loads a replay script: one `{"match", "response"}` object per line. Extra
/// keys (as written by a recording gateway) are ignored.
pub fn load_replay_script(path: &Path) -> Result<Vec<ReplayEntry>, GatewayError> {
    let file = File::open(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
    let mut script = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GatewayError::Config(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ReplayEntry = serde_json::from_str(&line)
            .map_err(|e| GatewayError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        script.push(entry);
    }
    Ok(script)
}

#[derive(Serialize)]
struct RecordedExchange<'a> {
    #[serde(rename = "match")]
    match_text: &'a str,
    response: &'a str,
    messages: &'a [ChatMessage],
}

/// Thread-safe handle over a backend.
#[derive(Debug)]
pub struct Gateway {
    backend: Backend,
    recorder: Option<Mutex<File>>,
    calls: AtomicUsize,
    retry_backoff: Duration,
}

impl Gateway {
    pub fn new(backend: Backend) -> Self {
        Gateway { backend, recorder: None, calls: AtomicUsize::new(0), retry_backoff: Duration::from_millis(250) }
    }

    pub fn replay(script: Vec<ReplayEntry>) -> Self {
        Gateway::new(Backend::Replay { script, strict: true })
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    /// Base delay before the first transport retry; doubles each retry.
    pub fn with_retry_backoff(mut self, backoff: Duration) -> Self {
        self.retry_backoff = backoff;
        self
    }

    /// Number of completions attempted through this gateway.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Appends every exchange to `sink` as a JSONL replay entry.
    pub fn record_to(mut self, sink: &Path) -> Result<Gateway, GatewayError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(sink)
            .map_err(|e| GatewayError::Sink(format!("{}: {e}", sink.display())))?;
        self.recorder = Some(Mutex::new(file));
        Ok(self)
    }

    pub fn complete(&self, messages: &[ChatMessage]) -> Result<ChatMessage, GatewayError> {
        let last_user = match messages.last() {
            Some(m) if m.role == ChatRole::User => m.content.as_str(),
            Some(_) => return Err(GatewayError::BadRequest("last message must come from the user".into())),
            None => return Err(GatewayError::BadRequest("no messages".into())),
        };
        if messages.iter().any(|m| m.content.is_empty()) {
            return Err(GatewayError::BadRequest("message content is empty".into()));
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let content = match &self.backend {
            Backend::Replay { script, strict } => match script.iter().find(|e| last_user.contains(&e.r#match)) {
                Some(entry) => entry.response.clone(),
                None if *strict => return Err(GatewayError::ReplayMiss(truncate(last_user, 120))),
                None => REPLAY_NO_MATCH.to_string(),
            },
            Backend::Remote(cfg) => self.remote_complete(cfg, messages)?,
        };
        if let Some(rec) = &self.recorder {
            let line = serde_json::to_string(&RecordedExchange { match_text: last_user, response: &content, messages })
                .map_err(|e| GatewayError::Sink(e.to_string()))?;
            let mut file = rec.lock().map_err(|_| GatewayError::Sink("recorder lock poisoned".into()))?;
            writeln!(file, "{line}").and_then(|_| file.flush()).map_err(|e| GatewayError::Sink(e.to_string()))?;
        }
        Ok(ChatMessage::assistant(content))
    }

    fn remote_complete(&self, cfg: &RemoteConfig, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        let chars: usize = messages.iter().map(|m| m.content.chars().count()).sum();
        let estimated = chars.div_ceil(4);
        if estimated > cfg.max_tokens as usize {
            return Err(GatewayError::PromptTooLarge { estimated, limit: cfg.max_tokens });
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_s.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        let body = serde_json::json!({
            "model": cfg.model_name,
            "messages": messages,
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        });
        let api_key = cfg.api_key_env.as_deref().and_then(|name| std::env::var(name).ok());

        let mut attempt = 0;
        loop {
            let mut req = agent.post(&cfg.endpoint_url).header("Content-Type", "application/json");
            if let Some(key) = &api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let err = match req.send_json(&body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.body_mut().read_to_string().map_err(|e| GatewayError::Transport(e.to_string()))?;
                    if !(200..300).contains(&status) {
                        return Err(GatewayError::Status { code: status, body: truncate(&text, 500) });
                    }
                    return parse_completion(&text);
                }
                Err(ureq::Error::Timeout(_)) => GatewayError::Timeout,
                Err(e) => GatewayError::Transport(e.to_string()),
            };
            if attempt >= TRANSPORT_RETRIES {
                return Err(err);
            }
            log::warn!("chat completion attempt {} failed: {err}; retrying", attempt + 1);
            std::thread::sleep(self.retry_backoff * 2u32.pow(attempt));
            attempt += 1;
        }
    }
}

fn parse_completion(text: &str) -> Result<String, GatewayError> {
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| GatewayError::Malformed(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| GatewayError::Malformed("missing choices[0].message.content".into()))
}

fn truncate(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        format!("{}...", s.chars().take(max).collect::<String>())
    }
}

/// Returns the outermost `{...}` span of an LLM reply, skipping prose and
/// code fences around it.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Read;
    use std::net::TcpListener;

    fn script(entries: &[(&str, &str)]) -> Vec<ReplayEntry> {
        entries.iter().map(|(m, r)| ReplayEntry { r#match: m.to_string(), response: r.to_string() }).collect()
    }

    #[test]
    fn prompt_shapes() {
        let lib = RagLibrary::default();
        let zs = build_prompt(&PromptStrategy::ZeroShot, "Explain ACL", "", &lib).unwrap();
        assert_eq!(zs.len(), 2);
        assert_eq!(zs[1], ChatMessage::user("Explain ACL"));

        let examples = vec![
            FewShotExample { input: "q1".into(), output: "a1".into() },
            FewShotExample { input: "q2".into(), output: "a2".into() },
        ];
        let fs = build_prompt(&PromptStrategy::FewShot { examples }, "task", "ctx", &lib).unwrap();
        assert_eq!(fs.len(), 6);
        let roles: Vec<ChatRole> = fs.iter().map(|m| m.role).collect();
        use ChatRole::*;
        assert_eq!(roles, [System, User, Assistant, User, Assistant, User]);

        let cot = build_prompt(&PromptStrategy::cot(), "task", "", &lib).unwrap();
        assert!(cot.last().unwrap().content.ends_with("Let us reason step by step."));

        assert_eq!(
            build_prompt(&PromptStrategy::FewShot { examples: vec![] }, "t", "", &lib),
            Err(PromptError::FewShotCount(0))
        );
        assert_eq!(build_prompt(&PromptStrategy::ZeroShot, "  ", "", &lib), Err(PromptError::EmptyTask));
    }

    #[test]
    fn replay_matches_first_substring() {
        let gw = Gateway::replay(script(&[("capacity", "PLAN_OK"), ("cap", "OTHER")]));
        let reply = gw.complete(&[ChatMessage::user("compute capacity")]).unwrap();
        assert_eq!(reply, ChatMessage::assistant("PLAN_OK"));
        assert!(matches!(gw.complete(&[ChatMessage::user("hello")]), Err(GatewayError::ReplayMiss(_))));

        let lenient = Gateway::new(Backend::Replay { script: vec![], strict: false });
        assert_eq!(lenient.complete(&[ChatMessage::user("x")]).unwrap().content, REPLAY_NO_MATCH);
    }

    #[test]
    fn rejects_non_user_tail() {
        let gw = Gateway::replay(script(&[("", "x")]));
        assert!(matches!(gw.complete(&[ChatMessage::system("s")]), Err(GatewayError::BadRequest(_))));
        assert!(matches!(gw.complete(&[]), Err(GatewayError::BadRequest(_))));
    }

    #[test]
    fn unreachable_endpoint_is_transport_error_after_retries() {
        // Bind then drop to get a port nobody listens on.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let gw = Gateway::new(Backend::Remote(RemoteConfig {
            endpoint_url: format!("http://127.0.0.1:{port}/v1/chat/completions"),
            model_name: "m".into(),
            temperature: 0.0,
            max_tokens: 1000,
            timeout_s: 2,
            api_key_env: None,
        }))
        .with_retry_backoff(Duration::from_millis(1));
        let err = gw.complete(&[ChatMessage::user("hi")]).unwrap_err();
        assert!(matches!(err, GatewayError::Transport(_)), "{err:?}");
    }

    #[test]
    fn oversized_prompt_rejected() {
        let gw = Gateway::new(Backend::Remote(RemoteConfig {
            endpoint_url: "http://127.0.0.1:9/".into(),
            model_name: "m".into(),
            temperature: 0.0,
            max_tokens: 2,
            timeout_s: 1,
            api_key_env: None,
        }));
        assert!(matches!(
            gw.complete(&[ChatMessage::user("this is far more than eight characters")]),
            Err(GatewayError::PromptTooLarge { .. })
        ));
    }

    #[test]
    fn remote_wire_format() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let server = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            // read headers then the declared body length
            loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf);
                if let Some(idx) = text.find("\r\n\r\n") {
                    let len: usize = text
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse().unwrap()))
                        .unwrap_or(0);
                    if buf.len() >= idx + 4 + len {
                        break;
                    }
                }
            }
            let reply = r#"{"choices":[{"message":{"role":"assistant","content":"PONG"}}]}"#;
            write!(stream, "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}", reply.len()).unwrap();
            String::from_utf8(buf).unwrap()
        });
        std::env::set_var("CHATNET_TEST_KEY", "sk-test");
        let gw = Gateway::new(Backend::Remote(RemoteConfig {
            endpoint_url: format!("http://127.0.0.1:{port}/v1/chat/completions"),
            model_name: "net-model".into(),
            temperature: 0.0,
            max_tokens: 1000,
            timeout_s: 5,
            api_key_env: Some("CHATNET_TEST_KEY".into()),
        }));
        let reply = gw.complete(&[ChatMessage::system("sys"), ChatMessage::user("PING")]).unwrap();
        assert_eq!(reply.content, "PONG");
        let request = server.join().unwrap();
        assert!(request.starts_with("POST /v1/chat/completions"));
        assert!(request.to_ascii_lowercase().contains("authorization: bearer sk-test"));
        let body: serde_json::Value = serde_json::from_str(&request[request.find("\r\n\r\n").unwrap() + 4..]).unwrap();
        assert_eq!(body["model"], "net-model");
        assert_eq!(body["messages"][1]["content"], "PING");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 1000);
    }

    #[test]
    fn config_never_holds_the_key() {
        let cfg = Backend::Remote(RemoteConfig {
            endpoint_url: "http://x".into(),
            model_name: "m".into(),
            temperature: 0.0,
            max_tokens: 10,
            timeout_s: 1,
            api_key_env: Some("OPENAI_API_KEY".into()),
        });
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"api_key_env\":\"OPENAI_API_KEY\""));
        assert!(!json.contains("sk-"));
    }

    #[test]
    fn recording_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sink = dir.path().join("session.jsonl");
        let gw = Gateway::replay(script(&[("capacity", "PLAN_OK")])).record_to(&sink).unwrap();
        gw.complete(&[ChatMessage::user("compute capacity")]).unwrap();
        let text = std::fs::read_to_string(&sink).unwrap();
        assert_eq!(text.lines().count(), 1);

        let replayed = Gateway::replay(load_replay_script(&sink).unwrap());
        assert_eq!(replayed.complete(&[ChatMessage::user("compute capacity")]).unwrap().content, "PLAN_OK");
    }

    #[test]
    fn recording_to_unwritable_sink_fails() {
        let dir = tempfile::tempdir().unwrap();
        // a directory cannot be opened for appending
        let err = Gateway::replay(vec![]).record_to(dir.path()).unwrap_err();
        assert!(matches!(err, GatewayError::Sink(_)));
    }

    #[test]
    fn json_extraction() {
        assert_eq!(extract_json_object("```json\n{\"a\": {\"b\": 1}}\n```"), Some("{\"a\": {\"b\": 1}}"));
        assert_eq!(extract_json_object("no json"), None);
    }
}
