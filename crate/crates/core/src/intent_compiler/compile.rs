//! Kind-directed artifact emission.
//!
//! Each body wraps a fixed core line in fixed boilerplate:
//!
//! | intent | artifact | core |
//! |---|---|---|
//! | AccessControl | Acl | `deny ip any <ip>` (sequence 10 in a named extended list) |
//! | QosPriority | CliPolicy | `class-map <C>` and `policy-map <C>-Policy` |
//! | AutoConfig | YangXml | `<interface><name><if></name></interface>` |
//! | PacketInspection | FilterSpec | `IP header\| <P> header\| Payload` |
//! | CapacityConstraint | ConstraintExpr | `if (...) { max_load <= <u> * total_capacity }` |
//! | CapacityPlanning | PlanRequest | JSON solve request |

use std::collections::BTreeMap;

use super::constraint::{Bound, ConstraintExpr};
use super::{ArtifactKind, Intent, IntentError, IntentKind, NetworkArtifact};

/// Interface used when an AutoConfig intent names none.
pub const DEFAULT_INTERFACE: &str = "10GE 1/0/1";

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn parse_window(name: &str, raw: &str) -> Result<(u8, u8), IntentError> {
    let bad = |message: String| IntentError::BadParam { name: name.into(), message };
    let (a, b) = raw.split_once('-').ok_or_else(|| bad(format!("expected `start-end`, got `{raw}`")))?;
    let start: u8 = a.trim().parse().map_err(|_| bad(format!("bad start hour `{a}`")))?;
    let end: u8 = b.trim().parse().map_err(|_| bad(format!("bad end hour `{b}`")))?;
    if start >= end || end > 24 {
        return Err(bad(format!("window {start}-{end} is not a valid range within 0-24")));
    }
    Ok((start, end))
}

fn parse_fraction(name: &str, raw: &str) -> Result<f64, IntentError> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|u| *u > 0.0 && *u <= 1.0)
        .ok_or_else(|| IntentError::BadParam { name: name.into(), message: format!("`{raw}` is not in (0,1]") })
}

pub fn compile_intent(intent: &Intent) -> Result<NetworkArtifact, IntentError> {
    intent.check()?;
    let required = |name: &str| intent.param(name).ok_or_else(|| IntentError::MissingParam(name.into()));
    let mut metadata = BTreeMap::from([
        ("intent_kind".to_string(), intent.kind.to_string()),
        ("source".to_string(), format!("{:?}", intent.source).to_lowercase()),
    ]);

    let (kind, body) = match intent.kind {
        IntentKind::AccessControl => {
            let ip = required("ip")?;
            let protocol = intent.param("protocol").unwrap_or("ip");
            let body = format!("ip access-list extended RESTRICT-{ip}\n 10 deny {protocol} any {ip}\n");
            super::parse_acl(&body)?;
            (ArtifactKind::Acl, body)
        }
        IntentKind::QosPriority => {
            let class = required("traffic_class")?;
            let dscp = intent.param("dscp").unwrap_or("ef");
            let percent = intent.param("priority_percent").unwrap_or("30");
            let body = format!(
                "class-map {class}\n match dscp {dscp}\n!\npolicy-map {class}-Policy\n class {class}\n  priority percent {percent}\n!\n"
            );
            (ArtifactKind::CliPolicy, body)
        }
        IntentKind::AutoConfig => {
            let name = intent.param("interface").unwrap_or(DEFAULT_INTERFACE);
            metadata.insert("interface".into(), name.to_string());
            let body = format!(
                "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<config xmlns=\"urn:ietf:params:xml:ns:netconf:base:1.0\">\n  <interfaces xmlns=\"urn:ietf:params:xml:ns:yang:ietf-interfaces\">\n    <interface><name>{}</name></interface>\n  </interfaces>\n</config>\n",
                escape_xml(name)
            );
            (ArtifactKind::YangXml, body)
        }
        IntentKind::PacketInspection => {
            let protocol = intent.param("protocol").unwrap_or("ip").to_lowercase();
            metadata.insert("protocol".into(), protocol.clone());
            let layers = if protocol == "ip" {
                "IP header| Payload".to_string()
            } else {
                format!("IP header| {} header| Payload", protocol.to_uppercase())
            };
            let mut body = format!("filter inspect-{protocol}\n protocol {protocol}\n layers {layers}\n");
            if intent.param("spoof_check") == Some("true") {
                body.push_str(" check spoofed-source: source address must be reachable via the ingress interface\n");
                if protocol == "tcp" {
                    body.push_str(" check spoofed-handshake: ACK without a preceding SYN/SYN-ACK exchange\n");
                }
            }
            if intent.param("detect_malicious") == Some("true") {
                body.push_str(" check malicious: flag flows matching known attack signatures\n");
            }
            (ArtifactKind::FilterSpec, body)
        }
        IntentKind::CapacityConstraint => {
            let coefficient = parse_fraction("u_max", required("u_max")?)?;
            let (start, end) = parse_window("window", required("window")?)?;
            let expr = ConstraintExpr {
                clauses: vec![Bound::AtLeast(start), Bound::AtMost(end)],
                metric: "max_load".into(),
                coefficient,
                capacity_metric: "total_capacity".into(),
            };
            (ArtifactKind::ConstraintExpr, expr.to_string())
        }
        IntentKind::CapacityPlanning => {
            let mut request = serde_json::Map::new();
            request.insert("tool".into(), "solve_capacity".into());
            if let Some(u) = intent.param("u_max") {
                request.insert("u_max".into(), parse_fraction("u_max", u)?.into());
            }
            if let Some(w) = intent.param("window") {
                let (s, e) = parse_window("window", w)?;
                request.insert("peak_start_hour".into(), s.into());
                request.insert("peak_end_hour".into(), e.into());
            }
            request.insert("task".into(), intent.task_text.clone().into());
            let body = serde_json::to_string_pretty(&serde_json::Value::Object(request)).expect("json");
            (ArtifactKind::PlanRequest, body)
        }
    };
    Ok(NetworkArtifact { kind, body, metadata })
}
