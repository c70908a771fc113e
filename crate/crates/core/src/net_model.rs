//! Dual-layer (IP over optical) network model, traffic demands and the
//! topology-mutating what-if actions.
//!
//! Topologies are immutable values: [`apply_action`] returns a new topology and
//! leaves its input untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MODULE_SIZE_GBPS: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violated by `{id}`: {message}")]
    Invariant { id: String, message: String },
    #[error("row {row}: {message}")]
    Value { row: usize, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    #[default]
    Core,
    Edge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_km: Option<f64>,
    #[serde(default)]
    pub role: NodeRole,
}

impl Node {
    pub fn coords(&self) -> Option<(f64, f64)> {
        Some((self.x_km?, self.y_km?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberLink {
    pub id: String,
    pub a: String,
    pub b: String,
    pub length_km: f64,
    pub deployed: bool,
    /// Set on fibers created by [`Action::AddFiber`]; such fibers are charged
    /// by the cost model once traffic rides them.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub added: bool,
}

impl FiberLink {
    pub fn other_end(&self, node: &str) -> Option<&str> {
        if self.a == node {
            Some(&self.b)
        } else if self.b == node {
            Some(&self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpLink {
    pub id: String,
    pub a: String,
    pub b: String,
    pub fiber_path: Vec<String>,
    pub capacity_modules: u32,
    pub module_size_gbps: f64,
}

impl IpLink {
    pub fn capacity_gbps(&self) -> f64 {
        f64::from(self.capacity_modules) * self.module_size_gbps
    }

    pub fn other_end(&self, node: &str) -> Option<&str> {
        if self.a == node {
            Some(&self.b)
        } else if self.b == node {
            Some(&self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub fibers: Vec<FiberLink>,
    pub ip_links: Vec<IpLink>,
}

impl Topology {
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn fiber(&self, id: &str) -> Option<&FiberLink> {
        self.fibers.iter().find(|f| f.id == id)
    }

    pub fn ip_link(&self, id: &str) -> Option<&IpLink> {
        self.ip_links.iter().find(|l| l.id == id)
    }

    /// Sum of the lengths of the fibers an IP link rides. Unknown fibers
    /// contribute nothing; callers validate first.
    pub fn ip_link_length_km(&self, link: &IpLink) -> f64 {
        link.fiber_path
            .iter()
            .filter_map(|f| self.fiber(f))
            .map(|f| f.length_km)
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start_hour: u8,
    pub end_hour: u8,
}

impl TimeWindow {
    pub const FULL_DAY: TimeWindow = TimeWindow { start_hour: 0, end_hour: 24 };
    pub const BUSINESS_HOURS: TimeWindow = TimeWindow { start_hour: 9, end_hour: 17 };

    pub fn new(start_hour: u8, end_hour: u8) -> Result<Self, String> {
        if end_hour > 24 {
            return Err(format!("hour {end_hour} out of range [0,24]"));
        }
        if start_hour >= end_hour {
            return Err(format!("window start {start_hour} must precede end {end_hour}"));
        }
        Ok(TimeWindow { start_hour, end_hour })
    }

    /// Number of whole hours shared with `other`.
    pub fn overlap_hours(&self, other: &TimeWindow) -> u8 {
        let start = self.start_hour.max(other.start_hour);
        let end = self.end_hour.min(other.end_hour);
        end.saturating_sub(start)
    }

    pub fn contains_hour(&self, hour: u8) -> bool {
        self.start_hour <= hour && hour < self.end_hour
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start_hour, self.end_hour)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub src: String,
    pub dst: String,
    pub gbps: f64,
    pub window: TimeWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrafficMatrix {
    pub demands: Vec<Demand>,
}

impl TrafficMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("src,dst,gbps,start_hour,end_hour\n");
        for d in &self.demands {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                d.src, d.dst, d.gbps, d.window.start_hour, d.window.end_hour
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    AddFiber { a: String, b: String, length_km: f64 },
    AddCapacity { ip_link_id: String, extra_modules: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub subject_id: String,
    pub code: ViolationCode,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    EmptyId,
    DupId,
    DanglingRef,
    SelfLoop,
    BadLength,
    BadModuleSize,
    UndeployedFiber,
    BrokenChain,
}

// Raw document shapes. Optional fields carry the defaults documented on the
// public types.

#[derive(Deserialize)]
struct RawTopology {
    nodes: Vec<Node>,
    fibers: Vec<RawFiber>,
    ip_links: Vec<RawIpLink>,
}

#[derive(Deserialize)]
struct RawFiber {
    id: String,
    a: String,
    b: String,
    length_km: Option<f64>,
    #[serde(default = "default_true")]
    deployed: bool,
    #[serde(default)]
    added: bool,
}

#[derive(Deserialize)]
struct RawIpLink {
    id: String,
    a: String,
    b: String,
    fiber_path: Vec<String>,
    #[serde(default)]
    capacity_modules: u32,
    #[serde(default = "default_module_size")]
    module_size_gbps: f64,
}

fn default_true() -> bool {
    true
}

fn default_module_size() -> f64 {
    DEFAULT_MODULE_SIZE_GBPS
}

/// Parses the topology JSON document and checks every invariant.
pub fn parse_topology(text: &str) -> Result<Topology, ModelError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawTopology = serde_path_to_error::deserialize(de).map_err(|e| ModelError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;

    let coords: BTreeMap<&str, (f64, f64)> = raw
        .nodes
        .iter()
        .filter_map(|n| n.coords().map(|c| (n.id.as_str(), c)))
        .collect();

    let mut fibers = Vec::with_capacity(raw.fibers.len());
    for f in raw.fibers {
        let length_km = match f.length_km {
            Some(l) => l,
            None => match (coords.get(f.a.as_str()), coords.get(f.b.as_str())) {
                (Some(pa), Some(pb)) => ((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2)).sqrt(),
                _ => {
                    return Err(ModelError::Invariant {
                        id: f.id,
                        message: "length_km omitted and endpoint coordinates unavailable".into(),
                    })
                }
            },
        };
        fibers.push(FiberLink {
            id: f.id,
            a: f.a,
            b: f.b,
            length_km,
            deployed: f.deployed,
            added: f.added,
        });
    }

    let topology = Topology {
        nodes: raw.nodes,
        fibers,
        ip_links: raw
            .ip_links
            .into_iter()
            .map(|l| IpLink {
                id: l.id,
                a: l.a,
                b: l.b,
                fiber_path: l.fiber_path,
                capacity_modules: l.capacity_modules,
                module_size_gbps: l.module_size_gbps,
            })
            .collect(),
    };

    if let Some(v) = validate_topology(&topology).into_iter().next() {
        let id = match v.code {
            // Name the missing reference, not the element holding it.
            ViolationCode::DanglingRef => v.message.split('`').nth(1).unwrap_or(&v.subject_id).to_string(),
            _ => v.subject_id.clone(),
        };
        return Err(ModelError::Invariant { id, message: v.message });
    }
    Ok(topology)
}

const TRAFFIC_HEADER: [&str; 5] = ["src", "dst", "gbps", "start_hour", "end_hour"];

/// Parses a traffic matrix CSV. Row numbers in errors count data rows from 1.
pub fn parse_traffic_matrix(text: &str) -> Result<TrafficMatrix, ModelError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader.headers().map_err(|e| ModelError::Schema {
        path: "header".into(),
        message: e.to_string(),
    })?;
    let header: Vec<&str> = headers.iter().collect();
    if header != TRAFFIC_HEADER {
        return Err(ModelError::Schema {
            path: "header".into(),
            message: format!("expected `{}`, found `{}`", TRAFFIC_HEADER.join(","), header.join(",")),
        });
    }

    let mut demands = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| ModelError::Schema { path: format!("row {row}"), message: e.to_string() })?;
        if record.len() != TRAFFIC_HEADER.len() {
            return Err(ModelError::Schema {
                path: format!("row {row}"),
                message: format!("expected 5 fields, found {}", record.len()),
            });
        }
        let value_err = |message: String| ModelError::Value { row, message };
        let src = record[0].to_string();
        let dst = record[1].to_string();
        if src.is_empty() || dst.is_empty() {
            return Err(value_err("empty node id".into()));
        }
        if src == dst {
            return Err(value_err(format!("src and dst are both `{src}`")));
        }
        let gbps: f64 = record[2].parse().map_err(|_| value_err(format!("bad gbps `{}`", &record[2])))?;
        if !gbps.is_finite() || gbps < 0.0 {
            return Err(value_err(format!("gbps must be nonnegative, got {gbps}")));
        }
        let hour = |s: &str| -> Result<u8, ModelError> {
            s.parse::<u8>()
                .ok()
                .filter(|h| *h <= 24)
                .ok_or_else(|| value_err(format!("hour `{s}` out of range [0,24]")))
        };
        let window = TimeWindow::new(hour(&record[3])?, hour(&record[4])?).map_err(value_err)?;
        demands.push(Demand { src, dst, gbps, window });
    }
    Ok(TrafficMatrix { demands })
}

/// Checks every topology invariant. The result is empty iff the topology is
/// valid, and is sorted by subject id.
pub fn validate_topology(t: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |subject: &str, code, message: String| {
        out.push(Violation { subject_id: subject.to_string(), code, message });
    };

    let mut node_ids = BTreeSet::new();
    for n in &t.nodes {
        if n.id.is_empty() {
            push(&n.id, ViolationCode::EmptyId, "node id is empty".into());
        } else if !node_ids.insert(n.id.as_str()) {
            push(&n.id, ViolationCode::DupId, format!("duplicate node id `{}`", n.id));
        }
    }

    let mut fiber_ids = BTreeSet::new();
    for f in &t.fibers {
        if f.id.is_empty() {
            push(&f.id, ViolationCode::EmptyId, "fiber id is empty".into());
        } else if !fiber_ids.insert(f.id.as_str()) {
            push(&f.id, ViolationCode::DupId, format!("duplicate fiber id `{}`", f.id));
        }
        for end in [&f.a, &f.b] {
            if !node_ids.contains(end.as_str()) {
                push(&f.id, ViolationCode::DanglingRef, format!("unknown node `{end}`"));
            }
        }
        if f.a == f.b {
            push(&f.id, ViolationCode::SelfLoop, format!("fiber endpoints are both `{}`", f.a));
        }
        if !(f.length_km > 0.0 && f.length_km.is_finite()) {
            push(&f.id, ViolationCode::BadLength, format!("length_km must be positive, got {}", f.length_km));
        }
    }

    let mut link_ids = BTreeSet::new();
    for l in &t.ip_links {
        if l.id.is_empty() {
            push(&l.id, ViolationCode::EmptyId, "ip link id is empty".into());
        } else if !link_ids.insert(l.id.as_str()) {
            push(&l.id, ViolationCode::DupId, format!("duplicate ip link id `{}`", l.id));
        }
        for end in [&l.a, &l.b] {
            if !node_ids.contains(end.as_str()) {
                push(&l.id, ViolationCode::DanglingRef, format!("unknown node `{end}`"));
            }
        }
        if l.a == l.b {
            push(&l.id, ViolationCode::SelfLoop, format!("ip link endpoints are both `{}`", l.a));
        }
        if !(l.module_size_gbps > 0.0 && l.module_size_gbps.is_finite()) {
            push(
                &l.id,
                ViolationCode::BadModuleSize,
                format!("module_size_gbps must be positive, got {}", l.module_size_gbps),
            );
        }
        let mut dangling = false;
        for fid in &l.fiber_path {
            match t.fiber(fid) {
                None => {
                    dangling = true;
                    push(&l.id, ViolationCode::DanglingRef, format!("unknown fiber `{fid}`"));
                }
                Some(f) if !f.deployed => {
                    push(&l.id, ViolationCode::UndeployedFiber, format!("fiber `{fid}` is not deployed"));
                }
                Some(_) => {}
            }
        }
        if !dangling {
            if let Err(msg) = check_chain(t, l) {
                push(&l.id, ViolationCode::BrokenChain, msg);
            }
        }
    }

    out.sort();
    out
}

fn check_chain(t: &Topology, link: &IpLink) -> Result<(), String> {
    if link.fiber_path.is_empty() {
        return Err("fiber_path is empty".into());
    }
    let mut at = link.a.as_str();
    for fid in &link.fiber_path {
        let fiber = t.fiber(fid).ok_or_else(|| format!("unknown fiber `{fid}`"))?;
        at = fiber
            .other_end(at)
            .ok_or_else(|| format!("fiber `{fid}` does not continue the chain at `{at}`"))?;
    }
    if at != link.b {
        return Err(format!("fiber chain ends at `{at}`, expected `{}`", link.b));
    }
    Ok(())
}

fn next_id<'a>(prefix: char, ids: impl Iterator<Item = &'a str> + Clone) -> String {
    let max = ids
        .clone()
        .filter_map(|id| {
            let digits: String = id.chars().rev().take_while(|c| c.is_ascii_digit()).collect();
            digits.chars().rev().collect::<String>().parse::<u64>().ok()
        })
        .max()
        .unwrap_or(0);
    let mut n = max + 1;
    loop {
        let candidate = format!("{prefix}{n}");
        if !ids.clone().any(|id| id == candidate) {
            return candidate;
        }
        n += 1;
    }
}

/// Applies a what-if action, returning the modified copy.
pub fn apply_action(t: &Topology, action: &Action) -> Result<Topology, ModelError> {
    let mut next = t.clone();
    match action {
        Action::AddFiber { a, b, length_km } => {
            for end in [a, b] {
                if t.node(end).is_none() {
                    return Err(ModelError::NotFound(end.clone()));
                }
            }
            if a == b {
                return Err(ModelError::InvalidAction(format!("fiber endpoints are both `{a}`")));
            }
            if !(*length_km > 0.0 && length_km.is_finite()) {
                return Err(ModelError::InvalidAction(format!("length_km must be positive, got {length_km}")));
            }
            let fiber_id = next_id('F', t.fibers.iter().map(|f| f.id.as_str()));
            let link_id = next_id('L', t.ip_links.iter().map(|l| l.id.as_str()));
            next.fibers.push(FiberLink {
                id: fiber_id.clone(),
                a: a.clone(),
                b: b.clone(),
                length_km: *length_km,
                deployed: true,
                added: true,
            });
            next.ip_links.push(IpLink {
                id: link_id,
                a: a.clone(),
                b: b.clone(),
                fiber_path: vec![fiber_id],
                capacity_modules: 1,
                module_size_gbps: DEFAULT_MODULE_SIZE_GBPS,
            });
        }
        Action::AddCapacity { ip_link_id, extra_modules } => {
            if *extra_modules == 0 {
                return Err(ModelError::InvalidAction("extra_modules must be at least 1".into()));
            }
            let link = next
                .ip_links
                .iter_mut()
                .find(|l| &l.id == ip_link_id)
                .ok_or_else(|| ModelError::NotFound(ip_link_id.clone()))?;
            link.capacity_modules += extra_modules;
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TRIANGLE: &str = r#"{
        "nodes": [
            {"id": "A", "name": "Alpha", "x_km": 0, "y_km": 0, "role": "core"},
            {"id": "B", "name": "Bravo", "x_km": 100, "y_km": 0, "role": "core"},
            {"id": "C", "name": "Charlie", "x_km": 50, "y_km": 86.6, "role": "edge"}
        ],
        "fibers": [
            {"id": "F1", "a": "A", "b": "B", "length_km": 100, "deployed": true},
            {"id": "F2", "a": "B", "b": "C", "length_km": 100, "deployed": true},
            {"id": "F3", "a": "A", "b": "C", "length_km": 100, "deployed": true}
        ],
        "ip_links": [
            {"id": "L1", "a": "A", "b": "B", "fiber_path": ["F1"], "capacity_modules": 1, "module_size_gbps": 100},
            {"id": "L2", "a": "B", "b": "C", "fiber_path": ["F2"], "capacity_modules": 0, "module_size_gbps": 100},
            {"id": "L3", "a": "A", "b": "C", "fiber_path": ["F3"], "capacity_modules": 0, "module_size_gbps": 100}
        ]
    }"#;

    #[test]
    fn parses_triangle() {
        let t = parse_topology(TRIANGLE).unwrap();
        assert_eq!((t.nodes.len(), t.fibers.len(), t.ip_links.len()), (3, 3, 3));
        assert!(validate_topology(&t).is_empty());
    }

    #[test]
    fn dangling_fiber_is_named() {
        let doc = TRIANGLE.replace(r#""fiber_path": ["F1"]"#, r#""fiber_path": ["F9"]"#);
        match parse_topology(&doc) {
            Err(ModelError::Invariant { id, .. }) => assert_eq!(id, "F9"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_document_is_valid() {
        let t = parse_topology(r#"{"nodes":[],"fibers":[],"ip_links":[]}"#).unwrap();
        assert_eq!(t, Topology::default());
    }

    #[test]
    fn schema_error_reports_path() {
        let doc = TRIANGLE.replace(r#""length_km": 100, "deployed": true},
            {"id": "F2""#, r#""length_km": "far", "deployed": true},
            {"id": "F2""#);
        match parse_topology(&doc) {
            Err(ModelError::Schema { path, .. }) => assert_eq!(path, "fibers[0].length_km"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_ignored_and_length_defaults_to_distance() {
        let doc = r#"{"nodes":[{"id":"A","x_km":0,"y_km":0,"colour":"red"},{"id":"B","x_km":3,"y_km":4}],
            "fibers":[{"id":"F1","a":"A","b":"B"}],
            "ip_links":[{"id":"L1","a":"A","b":"B","fiber_path":["F1"]}], "extra": 1}"#;
        let t = parse_topology(doc).unwrap();
        assert_eq!(t.fibers[0].length_km, 5.0);
        assert!(t.fibers[0].deployed);
        assert_eq!(t.ip_links[0].module_size_gbps, 100.0);
        assert_eq!(t.ip_links[0].capacity_modules, 0);
    }

    #[test]
    fn traffic_rows() {
        let tm = parse_traffic_matrix("src,dst,gbps,start_hour,end_hour\nA,C,150,9,17\n").unwrap();
        assert_eq!(
            tm.demands,
            vec![Demand { src: "A".into(), dst: "C".into(), gbps: 150.0, window: TimeWindow::new(9, 17).unwrap() }]
        );
        let empty = parse_traffic_matrix("src,dst,gbps,start_hour,end_hour\n").unwrap();
        assert!(empty.demands.is_empty());
    }

    #[test]
    fn traffic_errors() {
        let h = "src,dst,gbps,start_hour,end_hour\n";
        assert_eq!(
            parse_traffic_matrix(&format!("{h}A,A,10,9,17\n")).unwrap_err(),
            ModelError::Value { row: 1, message: "src and dst are both `A`".into() }
        );
        assert!(matches!(
            parse_traffic_matrix(&format!("{h}A,B,10,9,17\nA,B,-1,9,17\n")),
            Err(ModelError::Value { row: 2, .. })
        ));
        assert!(matches!(parse_traffic_matrix(&format!("{h}A,B,10,9,25\n")), Err(ModelError::Value { row: 1, .. })));
        assert!(matches!(parse_traffic_matrix(&format!("{h}A,B,10,17,9\n")), Err(ModelError::Value { .. })));
        assert!(matches!(parse_traffic_matrix(&format!("{h}A,B,10,9\n")), Err(ModelError::Schema { .. })));
        assert!(matches!(parse_traffic_matrix("a,b,c\n"), Err(ModelError::Schema { .. })));
    }

    #[test]
    fn broken_chain_violation() {
        let mut t = parse_topology(TRIANGLE).unwrap();
        t.ip_links[0].fiber_path = vec!["F2".into()];
        let v = validate_topology(&t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, ViolationCode::BrokenChain);
        assert_eq!(v[0].subject_id, "L1");
    }

    #[test]
    fn duplicate_node_violation() {
        let mut t = parse_topology(TRIANGLE).unwrap();
        let mut dup = t.nodes[0].clone();
        dup.name = "again".into();
        t.nodes.push(dup);
        let v = validate_topology(&t);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, ViolationCode::DupId);
    }

    #[test]
    fn multi_hop_chain_is_valid() {
        let mut t = parse_topology(TRIANGLE).unwrap();
        t.ip_links.push(IpLink {
            id: "L4".into(),
            a: "A".into(),
            b: "C".into(),
            fiber_path: vec!["F1".into(), "F2".into()],
            capacity_modules: 0,
            module_size_gbps: 100.0,
        });
        assert!(validate_topology(&t).is_empty());
        assert_eq!(t.ip_link_length_km(t.ip_link("L4").unwrap()), 200.0);
    }

    #[test]
    fn add_capacity() {
        let t = parse_topology(TRIANGLE).unwrap();
        let next = apply_action(&t, &Action::AddCapacity { ip_link_id: "L1".into(), extra_modules: 2 }).unwrap();
        assert_eq!(next.ip_link("L1").unwrap().capacity_modules, 3);
        assert_eq!(t.ip_link("L1").unwrap().capacity_modules, 1);
        assert_eq!(
            apply_action(&t, &Action::AddCapacity { ip_link_id: "L9".into(), extra_modules: 1 }),
            Err(ModelError::NotFound("L9".into()))
        );
    }

    #[test]
    fn add_fiber_uses_fresh_ids() {
        let t = parse_topology(TRIANGLE).unwrap();
        let next = apply_action(&t, &Action::AddFiber { a: "A".into(), b: "B".into(), length_km: 80.0 }).unwrap();
        assert_eq!(next.fibers.len(), 4);
        assert_eq!(next.ip_links.len(), 4);
        let f = next.fiber("F4").unwrap();
        assert!(f.deployed && f.added);
        let l = next.ip_link("L4").unwrap();
        assert_eq!((l.a.as_str(), l.b.as_str(), l.capacity_modules), ("A", "B", 1));
        assert_eq!(l.fiber_path, vec!["F4".to_string()]);
        assert!(validate_topology(&next).is_empty());
        assert!(matches!(
            apply_action(&t, &Action::AddFiber { a: "A".into(), b: "Z".into(), length_km: 1.0 }),
            Err(ModelError::NotFound(_))
        ));
    }

    #[test]
    fn fresh_id_skips_collisions() {
        assert_eq!(next_id('F', ["F2", "X7", "F8x"].into_iter()), "F8");
        assert_eq!(next_id('F', ["trunk"].into_iter()), "F1");
    }
}
