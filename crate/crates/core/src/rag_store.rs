//! Chunked document store with cosine retrieval.
//!
//! The default embedder is a signed feature-hashing bag of word unigrams and
//! bigrams, so retrieval runs without any model or network access.

use std::cmp::Ordering;
use std::fs;
use std::hash::Hasher;
use std::path::Path;
use std::time::Duration;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EMBEDDING_DIM: usize = 256;
pub const DEFAULT_CHUNK_CHARS: usize = 800;
pub const DEFAULT_OVERLAP_CHARS: usize = 100;
/// How far back a chunk boundary may move to land on whitespace.
pub const SNAP_WINDOW_CHARS: usize = 80;
pub const CONTEXT_HEADER: &str = "Retrieved context (ranked by relevance):";
pub const NO_CONTEXT_SENTINEL: &str = "no relevant context found";
pub const SNAPSHOT_FILE: &str = "ragstore.json";

#[derive(Debug, Error)]
pub enum RagError {
    #[error("query has no searchable tokens")]
    EmptyQuery,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("overlap {overlap} must be smaller than chunk size {chunk}")]
    BadChunking { chunk: usize, overlap: usize },
    #[error("embedding dimension {got} does not match store dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding endpoint: {0}")]
    Embedding(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("snapshot: {0}")]
    Snapshot(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Embedder {
    #[default]
    HashingNgram,
    /// An embeddings endpoint speaking `{"input"} -> {"data":[{"embedding"}]}`.
    RemoteEmbedding {
        endpoint: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<String>,
    },
}

/// A chunk span in characters, `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// Splits `text` into overlapping character windows. Each chunk after the
/// first begins exactly `overlap` characters before the previous one ended.
/// A boundary falling inside a word is moved back to just after the nearest
/// whitespace when one lies within [`SNAP_WINDOW_CHARS`].
pub fn chunk_spans(text: &str, chunk_chars: usize, overlap: usize) -> Result<Vec<Span>, RagError> {
    if chunk_chars == 0 || overlap >= chunk_chars {
        return Err(RagError::BadChunking { chunk: chunk_chars, overlap });
    }
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut spans = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = (start + chunk_chars).min(n);
        if end < n && !chars[end - 1].is_whitespace() && !chars[end].is_whitespace() {
            let floor = end.saturating_sub(SNAP_WINDOW_CHARS).max(start + overlap + 1);
            if let Some(ws) = (floor..end).rev().find(|&i| chars[i - 1].is_whitespace()) {
                end = ws;
            }
        }
        spans.push(Span { start, end });
        if end == n {
            break;
        }
        start = end - overlap;
    }
    Ok(spans)
}

pub fn chunk_document(text: &str, chunk_chars: usize, overlap: usize) -> Result<Vec<String>, RagError> {
    let chars: Vec<char> = text.chars().collect();
    Ok(chunk_spans(text, chunk_chars, overlap)?
        .into_iter()
        .map(|s| chars[s.start..s.end].iter().collect())
        .collect())
}

fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| {
            let lower = raw.to_lowercase();
            let trimmed = lower.trim_matches(|c: char| !c.is_alphanumeric());
            if trimmed.is_empty() { lower.clone() } else { trimmed.to_string() }
        })
        .collect()
}

fn add_feature(v: &mut [f64], feature: &str) {
    let mut h = FnvHasher::default();
    h.write(feature.as_bytes());
    let h = h.finish();
    let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
    v[(h % EMBEDDING_DIM as u64) as usize] += sign;
}

fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Signed hashing embedding of word unigrams and bigrams. Whitespace-only
/// text gives the zero vector.
pub fn hashing_embed(text: &str) -> Vec<f64> {
    let toks = tokens(text);
    let mut v = vec![0.0; EMBEDDING_DIM];
    for t in &toks {
        add_feature(&mut v, t);
    }
    for pair in toks.windows(2) {
        add_feature(&mut v, &format!("{} {}", pair[0], pair[1]));
    }
    normalize(&mut v);
    v
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) }
}

fn remote_embed(endpoint: &str, model: Option<&str>, text: &str) -> Result<Vec<f64>, RagError> {
    let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(30))).build().into();
    let mut body = serde_json::json!({ "input": text });
    if let Some(m) = model {
        body["model"] = m.into();
    }
    let mut resp = agent.post(endpoint).send_json(&body).map_err(|e| RagError::Embedding(e.to_string()))?;
    let v: serde_json::Value = resp.body_mut().read_json().map_err(|e| RagError::Embedding(e.to_string()))?;
    let arr = v
        .pointer("/data/0/embedding")
        .and_then(|e| e.as_array())
        .ok_or_else(|| RagError::Embedding("missing data[0].embedding".into()))?;
    let mut out = arr
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| RagError::Embedding("non-numeric embedding".into())))
        .collect::<Result<Vec<_>, _>>()?;
    normalize(&mut out);
    Ok(out)
}

pub fn embed_text(text: &str, embedder: &Embedder) -> Result<Vec<f64>, RagError> {
    match embedder {
        Embedder::HashingNgram => Ok(hashing_embed(text)),
        Embedder::RemoteEmbedding { .. } if text.trim().is_empty() => Ok(Vec::new()),
        Embedder::RemoteEmbedding { endpoint, model } => remote_embed(endpoint, model.as_deref(), text),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub id: String,
    pub source: String,
    pub position: usize,
    pub text: String,
    pub embedding: Vec<f64>,
}

impl DocumentChunk {
    pub fn searchable(&self) -> bool {
        self.embedding.iter().any(|x| *x != 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchHit {
    pub chunk: DocumentChunk,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorStore {
    #[serde(default)]
    pub embedder: Embedder,
    #[serde(default = "default_chunk_chars")]
    pub chunk_chars: usize,
    #[serde(default = "default_overlap")]
    pub overlap_chars: usize,
    pub chunks: Vec<DocumentChunk>,
}

fn default_chunk_chars() -> usize {
    DEFAULT_CHUNK_CHARS
}

fn default_overlap() -> usize {
    DEFAULT_OVERLAP_CHARS
}

impl Default for VectorStore {
    fn default() -> Self {
        VectorStore::new(Embedder::HashingNgram)
    }
}

impl VectorStore {
    pub fn new(embedder: Embedder) -> Self {
        VectorStore { embedder, chunk_chars: DEFAULT_CHUNK_CHARS, overlap_chars: DEFAULT_OVERLAP_CHARS, chunks: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    fn dimension(&self) -> Option<usize> {
        self.chunks.iter().find(|c| c.searchable()).map(|c| c.embedding.len())
    }

    /// Chunks and embeds `text`; returns the number of chunks added.
    /// Positions continue after any chunks already stored under `source`.
    pub fn add_document(&mut self, source: &str, text: &str) -> Result<usize, RagError> {
        let pieces = chunk_document(text, self.chunk_chars, self.overlap_chars)?;
        let first = self.chunks.iter().filter(|c| c.source == source).map(|c| c.position + 1).max().unwrap_or(0);
        let mut expected = self.dimension();
        let mut added = Vec::with_capacity(pieces.len());
        for (i, piece) in pieces.into_iter().enumerate() {
            let embedding = embed_text(&piece, &self.embedder)?;
            if !embedding.is_empty() && embedding.iter().any(|x| *x != 0.0) {
                match expected {
                    Some(d) if d != embedding.len() => {
                        return Err(RagError::DimensionMismatch { expected: d, got: embedding.len() })
                    }
                    _ => expected = Some(embedding.len()),
                }
            }
            let position = first + i;
            added.push(DocumentChunk { id: format!("{source}#{position}"), source: source.to_string(), position, text: piece, embedding });
        }
        let n = added.len();
        self.chunks.extend(added);
        Ok(n)
    }

    /// Ingests one `.txt`/`.md` file, or every such file under a directory
    /// (sorted by path). Other extensions are skipped.
    pub fn ingest_path(&mut self, path: &Path) -> Result<usize, RagError> {
        let io = |p: &Path, e: std::io::Error| RagError::Io { path: p.display().to_string(), message: e.to_string() };
        let mut files = Vec::new();
        if path.is_dir() {
            let mut stack = vec![path.to_path_buf()];
            while let Some(dir) = stack.pop() {
                for entry in fs::read_dir(&dir).map_err(|e| io(&dir, e))? {
                    let p = entry.map_err(|e| io(&dir, e))?.path();
                    if p.is_dir() {
                        stack.push(p);
                    } else {
                        files.push(p);
                    }
                }
            }
            files.sort();
        } else {
            files.push(path.to_path_buf());
        }
        let mut total = 0;
        for file in files {
            let ext = file.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if !matches!(ext.as_deref(), Some("txt" | "md" | "markdown")) {
                log::debug!("skipping {}", file.display());
                continue;
            }
            let text = fs::read_to_string(&file).map_err(|e| io(&file, e))?;
            let source = file
                .strip_prefix(path)
                .ok()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(file.file_name().map(Path::new).unwrap_or(&file))
                .to_string_lossy()
                .replace('\\', "/");
            total += self.add_document(&source, &text)?;
        }
        Ok(total)
    }

    /// Top-`k` chunks by cosine score. Ties keep (source, position) order;
    /// chunks with no searchable tokens are never returned.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, RagError> {
        if k == 0 {
            return Err(RagError::ZeroK);
        }
        if query.trim().is_empty() {
            return Err(RagError::EmptyQuery);
        }
        let q = embed_text(query, &self.embedder)?;
        if !q.iter().any(|x| *x != 0.0) {
            return Err(RagError::EmptyQuery);
        }
        let mut hits: Vec<SearchHit> = self
            .chunks
            .iter()
            .filter(|c| c.searchable())
            .map(|c| {
                if c.embedding.len() != q.len() {
                    return Err(RagError::DimensionMismatch { expected: c.embedding.len(), got: q.len() });
                }
                Ok(SearchHit { chunk: c.clone(), score: cosine(&q, &c.embedding) })
            })
            .collect::<Result<_, _>>()?;
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.chunk.source.cmp(&b.chunk.source))
                .then_with(|| a.chunk.position.cmp(&b.chunk.position))
        });
        hits.truncate(k);
        Ok(hits)
    }

    pub fn save(&self, path: &Path) -> Result<(), RagError> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| RagError::Io { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, RagError> {
        let text =
            fs::read_to_string(path).map_err(|e| RagError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn empty_context_block() -> String {
    format!("{CONTEXT_HEADER}\n{NO_CONTEXT_SENTINEL}\n")
}

/// Context block for a prompt: the header, then each hit with a positive
/// score as a `[source:position]` section in rank order.
pub fn augment_prompt(store: &VectorStore, query: &str, top_k: usize) -> Result<String, RagError> {
    let hits: Vec<SearchHit> = store.search(query, top_k)?.into_iter().filter(|h| h.score > 0.0).collect();
    if hits.is_empty() {
        return Ok(empty_context_block());
    }
    let mut out = format!("{CONTEXT_HEADER}\n");
    for h in hits {
        out.push_str(&format!("[{}:{}]\n{}\n", h.chunk.source, h.chunk.position, h.chunk.text.trim_end()));
    }
    Ok(out)
}

/// Rebuilds a text from its chunks by dropping each later chunk's leading
/// overlap.
pub fn reconstruct(chunks: &[String], overlap: usize) -> String {
    let mut out = String::new();
    for (i, c) in chunks.iter().enumerate() {
        if i == 0 {
            out.push_str(c);
        } else {
            out.extend(c.chars().skip(overlap));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: usize) -> String {
        // "wNNN " tokens, 5 chars each, so whitespace lies every 5 chars
        (0..n).map(|i| format!("w{:03} ", i % 1000)).collect()
    }

    #[test]
    fn stride_arithmetic_1600() {
        let text: String = "x".repeat(1600);
        let spans = chunk_spans(&text, 800, 100).unwrap();
        // no whitespace, so no snapping: [0,800) [700,1500) [1400,1600)
        assert_eq!(spans, vec![Span { start: 0, end: 800 }, Span { start: 700, end: 1500 }, Span { start: 1400, end: 1600 }]);
    }

    #[test]
    fn snapping_moves_to_whitespace() {
        let text = words(320); // 1600 chars
        let spans = chunk_spans(&text, 803, 100).unwrap();
        // 803 falls 3 chars into a token; the preceding space ends at 800
        assert_eq!(spans[0], Span { start: 0, end: 800 });
        assert_eq!(spans[1].start, 700);
        assert_eq!(spans.len(), 3);
    }

    #[test]
    fn short_and_empty() {
        assert_eq!(chunk_document("hello world", 800, 100).unwrap(), vec!["hello world".to_string()]);
        assert!(chunk_document("", 800, 100).unwrap().is_empty());
        assert!(matches!(chunk_document("x", 10, 10), Err(RagError::BadChunking { .. })));
    }

    #[test]
    fn embedding_examples() {
        let q = hashing_embed("VOIP priority");
        assert_eq!(q, hashing_embed("VOIP priority"));
        assert!((cosine(&q, &q) - 1.0).abs() < 1e-12);
        let related = cosine(&hashing_embed("VOIP class-map policy"), &q);
        let unrelated = cosine(&hashing_embed("fiber span loss"), &q);
        assert!(related > unrelated, "{related} vs {unrelated}");
        assert!(hashing_embed("   ").iter().all(|x| *x == 0.0));
    }

    #[test]
    fn search_ranks_verbatim_first() {
        let mut store = VectorStore::default();
        store.add_document("a.md", "fiber span loss budget").unwrap();
        store.add_document("b.md", "VOIP priority queue").unwrap();
        store.add_document("c.md", "VOIP codecs").unwrap();
        let hits = store.search("VOIP priority queue", 10).unwrap();
        assert_eq!(hits[0].chunk.source, "b.md");
        assert!((hits[0].score - 1.0).abs() < 1e-9);
        assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(VectorStore::default().search("x", 3).unwrap().is_empty());
        assert!(matches!(store.search("  ", 3), Err(RagError::EmptyQuery)));
    }

    #[test]
    fn augment_block_shape() {
        let mut store = VectorStore::default();
        store.add_document("qos.md", "VOIP priority uses dscp ef").unwrap();
        store.add_document("acl.md", "deny ip any host").unwrap();
        store.add_document("misc.md", "VOIP calls").unwrap();
        let block = augment_prompt(&store, "VOIP priority", 2).unwrap();
        assert!(block.starts_with(CONTEXT_HEADER));
        assert_eq!(block.matches("\n[").count(), 2);
        assert!(block.find("[qos.md:0]").unwrap() < block.find("[misc.md:0]").unwrap());
        assert_eq!(block, augment_prompt(&store, "VOIP priority", 2).unwrap());
        assert!(augment_prompt(&VectorStore::default(), "q", 2).unwrap().ends_with("no relevant context found\n"));
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.md"), words(400)).unwrap();
        fs::write(dir.path().join("skip.pdf"), "binary").unwrap();
        let mut store = VectorStore::default();
        let n = store.ingest_path(dir.path()).unwrap();
        assert_eq!(n, store.len());
        assert!(store.chunks.iter().all(|c| c.source == "a.md"));
        let snap = dir.path().join(SNAPSHOT_FILE);
        store.save(&snap).unwrap();
        assert_eq!(VectorStore::load(&snap).unwrap(), store);
    }
}
