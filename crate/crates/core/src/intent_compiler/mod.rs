//! Natural-language intents to network-language artifacts.
//!
//! Two front ends produce an [`Intent`]: a fixed pattern grammar
//! ([`parse_intent_pattern`]) and an LLM extractor ([`parse_intent_llm`]).
//! [`compile_intent`] emits the artifact and [`verify_artifacts`] checks a set
//! of artifacts for conflicting or redundant policy.

mod acl;
mod compile;
mod constraint;
mod pattern;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm_gateway::{build_prompt, extract_json_object, Gateway, GatewayError, PromptError, PromptStrategy, RagLibrary};

pub use acl::{parse_acl, AclAction, AclRule, Prefix};
pub use compile::{compile_intent, DEFAULT_INTERFACE};
pub use constraint::{parse_constraint_expr, ConstraintExpr};
pub use pattern::parse_intent_pattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IntentKind {
    AccessControl,
    QosPriority,
    AutoConfig,
    PacketInspection,
    CapacityConstraint,
    CapacityPlanning,
}

impl IntentKind {
    pub const ALL: [IntentKind; 6] = [
        IntentKind::AccessControl,
        IntentKind::QosPriority,
        IntentKind::AutoConfig,
        IntentKind::PacketInspection,
        IntentKind::CapacityConstraint,
        IntentKind::CapacityPlanning,
    ];

    pub fn required_params(self) -> &'static [&'static str] {
        match self {
            IntentKind::AccessControl => &["ip"],
            IntentKind::QosPriority => &["traffic_class"],
            IntentKind::CapacityConstraint => &["u_max", "window"],
            _ => &[],
        }
    }
}

impl fmt::Display for IntentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntentSource {
    Pattern,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub kind: IntentKind,
    pub params: BTreeMap<String, String>,
    pub task_text: String,
    pub state_text: String,
    pub constraint_text: String,
    pub source: IntentSource,
}

impl Intent {
    /// Checks the kind-specific required parameters.
    pub fn check(&self) -> Result<(), IntentError> {
        for p in self.kind.required_params() {
            if self.params.get(*p).is_none_or(|v| v.trim().is_empty()) {
                return Err(IntentError::MissingParam(p.to_string()));
            }
        }
        Ok(())
    }

    pub fn param(&self, name: &str) -> Option<&str> {
        self.params.get(name).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArtifactKind {
    Acl,
    CliPolicy,
    YangXml,
    FilterSpec,
    ConstraintExpr,
    PlanRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkArtifact {
    pub kind: ArtifactKind,
    pub body: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl NetworkArtifact {
    pub fn acl(body: impl Into<String>) -> Self {
        NetworkArtifact { kind: ArtifactKind::Acl, body: body.into(), metadata: BTreeMap::new() }
    }
}

#[derive(Debug, Error)]
pub enum IntentError {
    #[error("no intent rule matched: {0:?}")]
    Unrecognized(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("invalid parameter `{name}`: {message}")]
    BadParam { name: String, message: String },
    #[error("intent extraction failed: {0}")]
    ExtractionFailed(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("artifact parse error: {0}")]
    Parse(String),
}

const EXTRACTION_INSTRUCTIONS: &str = "You translate network operator intents into structured form. \
Reply with one JSON object {\"kind\": K, \"params\": {name: string}} where K is one of \
AccessControl, QosPriority, AutoConfig, PacketInspection, CapacityConstraint, CapacityPlanning. \
Required params: AccessControl needs ip; QosPriority needs traffic_class; CapacityConstraint \
needs u_max (a fraction) and window (start-end hours, e.g. 9-17).";

#[derive(Deserialize)]
struct ExtractedIntent {
    kind: IntentKind,
    #[serde(default)]
    params: BTreeMap<String, serde_json::Value>,
}

fn validate_extraction(text: &str, reply: &str) -> Result<Intent, String> {
    let json = extract_json_object(reply).ok_or("response contains no JSON object")?;
    let raw: ExtractedIntent = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let params = raw
        .params
        .into_iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => Ok((k, s)),
            serde_json::Value::Number(n) => Ok((k, n.to_string())),
            serde_json::Value::Bool(b) => Ok((k, b.to_string())),
            other => Err(format!("param `{k}` must be a string, got {other}")),
        })
        .collect::<Result<BTreeMap<_, _>, _>>()?;
    let intent = Intent {
        kind: raw.kind,
        params,
        task_text: text.to_string(),
        state_text: String::new(),
        constraint_text: String::new(),
        source: IntentSource::Llm,
    };
    intent.check().map_err(|e| e.to_string())?;
    Ok(intent)
}

/// Extracts an intent with the LLM. An invalid reply gets one reprompt that
/// quotes the validator message; a second invalid reply fails.
pub fn parse_intent_llm(
    text: &str,
    gateway: &Gateway,
    strategy: &PromptStrategy,
    stores: &RagLibrary,
) -> Result<Intent, IntentError> {
    let mut messages = build_prompt(strategy, text, EXTRACTION_INSTRUCTIONS, stores)?;
    let first = gateway.complete(&messages)?;
    let problem = match validate_extraction(text, &first.content) {
        Ok(intent) => return Ok(intent),
        Err(problem) => problem,
    };
    messages.push(first);
    messages.push(crate::llm_gateway::ChatMessage::user(format!(
        "Your previous reply was invalid: {problem}. Reply with only the JSON object."
    )));
    let second = gateway.complete(&messages)?;
    validate_extraction(text, &second.content).map_err(IntentError::ExtractionFailed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FindingKind {
    Conflict,
    Redundancy,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Conflict {
    pub kind: FindingKind,
    pub rule_a: String,
    pub rule_b: String,
    pub reason: String,
}

/// Pairwise policy check over every ACL rule in the given artifacts, plus a
/// feasibility check of constraint expressions. Other artifact kinds are only
/// checked for well-formedness.
pub fn verify_artifacts(artifacts: &[NetworkArtifact]) -> Result<Vec<Conflict>, IntentError> {
    let mut rules: Vec<AclRule> = Vec::new();
    let mut findings = Vec::new();
    for art in artifacts {
        match art.kind {
            ArtifactKind::Acl => rules.extend(parse_acl(&art.body)?),
            ArtifactKind::ConstraintExpr => {
                let expr = parse_constraint_expr(&art.body)?;
                if let Some(reason) = expr.infeasibility() {
                    findings.push(Conflict {
                        kind: FindingKind::Infeasible,
                        rule_a: art.body.trim().to_string(),
                        rule_b: String::new(),
                        reason,
                    });
                }
            }
            ArtifactKind::YangXml => {
                roxmltree::Document::parse(&art.body).map_err(|e| IntentError::Parse(e.to_string()))?;
            }
            _ => {
                if art.body.trim().is_empty() {
                    return Err(IntentError::Parse(format!("{:?} artifact has an empty body", art.kind)));
                }
            }
        }
    }

    for i in 0..rules.len() {
        for j in i + 1..rules.len() {
            let (a, b) = (&rules[i], &rules[j]);
            let (ra, rb) = {
                let (x, y) = (a.to_string(), b.to_string());
                if x <= y { (x, y) } else { (y, x) }
            };
            if a == b {
                findings.push(Conflict {
                    kind: FindingKind::Redundancy,
                    rule_a: ra,
                    rule_b: rb,
                    reason: "identical rules".into(),
                });
            } else if a.action != b.action && a.overlaps(b) {
                findings.push(Conflict {
                    kind: FindingKind::Conflict,
                    rule_a: ra,
                    rule_b: rb,
                    reason: "permit and deny match overlapping traffic".into(),
                });
            }
        }
    }
    findings.sort();
    Ok(findings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::{Backend, ReplayEntry};

    fn replay(entries: &[(&str, &str)]) -> Gateway {
        Gateway::new(Backend::Replay {
            script: entries.iter().map(|(m, r)| ReplayEntry { r#match: m.to_string(), response: r.to_string() }).collect(),
            strict: true,
        })
    }

    const ROW2: &str = "Set up the new router to prioritize VoIP traffic for better call quality";

    #[test]
    fn llm_extraction_echoes_reply() {
        let gw = replay(&[("VoIP", r#"{"kind":"QosPriority","params":{"traffic_class":"VOIP"}}"#)]);
        let intent = parse_intent_llm(ROW2, &gw, &PromptStrategy::ZeroShot, &RagLibrary::default()).unwrap();
        assert_eq!(intent.kind, IntentKind::QosPriority);
        assert_eq!(intent.param("traffic_class"), Some("VOIP"));
        assert_eq!(intent.source, IntentSource::Llm);
        assert_eq!(gw.calls(), 1);
    }

    #[test]
    fn llm_non_json_twice_fails() {
        let gw = replay(&[("invalid", "still prose"), ("VoIP", "sure, VoIP gets priority")]);
        let err = parse_intent_llm(ROW2, &gw, &PromptStrategy::ZeroShot, &RagLibrary::default()).unwrap_err();
        assert!(matches!(err, IntentError::ExtractionFailed(_)));
        assert_eq!(gw.calls(), 2);
    }

    #[test]
    fn llm_missing_kind_reprompts_once() {
        let gw = replay(&[
            ("invalid", r#"{"kind":"QosPriority","params":{"traffic_class":"VOIP"}}"#),
            ("VoIP", r#"{"params":{"traffic_class":"VOIP"}}"#),
        ]);
        let intent = parse_intent_llm(ROW2, &gw, &PromptStrategy::ZeroShot, &RagLibrary::default()).unwrap();
        assert_eq!(intent.kind, IntentKind::QosPriority);
        assert_eq!(gw.calls(), 2);
    }

    #[test]
    fn verify_examples() {
        let deny = NetworkArtifact::acl("deny ip any 192.168.1.5");
        let permit = NetworkArtifact::acl("permit ip any 192.168.1.5");
        let found = verify_artifacts(&[deny.clone(), permit.clone()]).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].kind, FindingKind::Conflict);
        assert!(verify_artifacts(std::slice::from_ref(&deny)).unwrap().is_empty());
        let dup = verify_artifacts(&[deny.clone(), deny.clone()]).unwrap();
        assert_eq!(dup.len(), 1);
        assert_eq!(dup[0].kind, FindingKind::Redundancy);
        assert_eq!(verify_artifacts(&[permit, deny]).unwrap(), found);
    }

    #[test]
    fn verify_rejects_malformed() {
        assert!(matches!(verify_artifacts(&[NetworkArtifact::acl("allow everything")]), Err(IntentError::Parse(_))));
        let bad_xml = NetworkArtifact { kind: ArtifactKind::YangXml, body: "<a><b></a>".into(), metadata: BTreeMap::new() };
        assert!(matches!(verify_artifacts(&[bad_xml]), Err(IntentError::Parse(_))));
    }

    #[test]
    fn verify_flags_infeasible_constraint() {
        let art = NetworkArtifact {
            kind: ArtifactKind::ConstraintExpr,
            body: "if (time>=9 and time<=17) { max_load <= 1.5 * total_capacity }".into(),
            metadata: BTreeMap::new(),
        };
        let found = verify_artifacts(&[art]).unwrap();
        assert_eq!(found[0].kind, FindingKind::Infeasible);
    }

    #[test]
    fn non_overlapping_rules_do_not_conflict() {
        let found = verify_artifacts(&[
            NetworkArtifact::acl("deny tcp any 10.0.0.1"),
            NetworkArtifact::acl("permit udp any 10.0.0.1"),
            NetworkArtifact::acl("permit ip any 10.0.0.2"),
        ])
        .unwrap();
        assert!(found.is_empty());
    }
}
