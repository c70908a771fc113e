//! Deterministic keyword grammar. Rules are tried in a fixed order and the
//! first one whose predicate holds wins.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;

use super::{Intent, IntentError, IntentKind, IntentSource};

fn re(pattern: &str) -> Regex {
    Regex::new(pattern).expect("valid regex")
}

static IPV4: LazyLock<Regex> =
    LazyLock::new(|| re(r"\b((?:25[0-5]|2[0-4]\d|1?\d?\d)(?:\.(?:25[0-5]|2[0-4]\d|1?\d?\d)){3})(?:/(\d{1,2}))?\b"));
static ACCESS_VERB: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)\b(restrict|deny|block|forbid|prevent|disallow|blacklist|drop)\w*\b"));
static QOS_VERB: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)\b(prioriti[sz]\w*|priority|qos|quality of service|expedite)\b"));
static QOS_CLASS_AFTER_VERB: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)\bprioriti[sz]e\s+(?:the\s+|all\s+)?([A-Za-z][\w-]*)"));
static QOS_CLASS_BEFORE_TRAFFIC: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\b([A-Za-z][\w-]*)\s+(?:traffic|calls|flows)\b"));
static CONFIG_VERB: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)\b(adapt\w*|reconfigur\w*|auto-?configur\w*|self-?configur\w*|provision\w*)\b"));
static INTERFACE: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\b(\d+GE\s*\d+/\d+/\d+)"));
static INSPECT_VERB: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)\b(parse|inspect|detect|capture|sniff|analy[sz]e)\w*\b"));
static INSPECT_OBJECT: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\b(packets?|connections?|headers?|sessions?)\b"));
static PROTOCOL: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\b(tcp|udp|icmp)\b"));
static PERCENT: LazyLock<Regex> = LazyLock::new(|| re(r"(\d{1,3}(?:\.\d+)?)\s*%"));
static CAPACITY_WORD: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)\b(capacity|utili[sz]ation|load|bandwidth)\b"));
static HOUR_RANGE_12: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b(\d{1,2})(?::00)?\s*([ap])\.?m\.?\s*(?:to|-|until|and|through)\s*(\d{1,2})(?::00)?\s*([ap])\.?m\b")
});
static HOUR_RANGE_24: LazyLock<Regex> = LazyLock::new(|| re(r"\b(\d{1,2}):00\s*(?:-|to|until)\s*(\d{1,2}):00\b"));
static PLANNING: LazyLock<Regex> =
    LazyLock::new(|| re(r"(?i)(\bcapacity\b.*\bplan\w*|\bplan\w*\b.*\bcapacity\b|\bdimension\w*\b)"));

fn to_24h(hour: u32, meridiem: &str, is_end: bool) -> Option<u32> {
    if !(1..=12).contains(&hour) {
        return None;
    }
    let pm = meridiem.eq_ignore_ascii_case("p");
    Some(match (hour, pm) {
        (12, false) => if is_end { 24 } else { 0 },
        (12, true) => 12,
        (h, true) => h + 12,
        (h, false) => h,
    })
}

fn hour_window(text: &str) -> Option<String> {
    if let Some(c) = HOUR_RANGE_12.captures(text) {
        let start = to_24h(c[1].parse().ok()?, &c[2], false)?;
        let end = to_24h(c[3].parse().ok()?, &c[4], true)?;
        return (start < end).then(|| format!("{start}-{end}"));
    }
    let c = HOUR_RANGE_24.captures(text)?;
    let (start, end): (u32, u32) = (c[1].parse().ok()?, c[2].parse().ok()?);
    (start < end && end <= 24).then(|| format!("{start}-{end}"))
}

fn fraction(percent: &str) -> Option<String> {
    let p: f64 = percent.parse().ok()?;
    (p > 0.0 && p <= 100.0).then(|| format!("{}", p / 100.0))
}

type Rule = fn(&str) -> Option<(IntentKind, BTreeMap<String, String>)>;

fn access_rule(text: &str) -> Option<(IntentKind, BTreeMap<String, String>)> {
    ACCESS_VERB.find(text)?;
    let ip = IPV4.captures(text)?;
    let mut params = BTreeMap::from([("ip".to_string(), ip[0].to_string())]);
    if let Some(p) = PROTOCOL.captures(text) {
        params.insert("protocol".into(), p[1].to_lowercase());
    }
    Some((IntentKind::AccessControl, params))
}

fn qos_rule(text: &str) -> Option<(IntentKind, BTreeMap<String, String>)> {
    QOS_VERB.find(text)?;
    let class = QOS_CLASS_AFTER_VERB
        .captures(text)
        .or_else(|| QOS_CLASS_BEFORE_TRAFFIC.captures(text))
        .map(|c| c[1].to_uppercase())?;
    Some((IntentKind::QosPriority, BTreeMap::from([("traffic_class".to_string(), class)])))
}

fn config_rule(text: &str) -> Option<(IntentKind, BTreeMap<String, String>)> {
    CONFIG_VERB.find(text)?;
    let mut params = BTreeMap::new();
    if let Some(c) = INTERFACE.captures(text) {
        params.insert("interface".to_string(), c[1].to_string());
    }
    Some((IntentKind::AutoConfig, params))
}

fn inspection_rule(text: &str) -> Option<(IntentKind, BTreeMap<String, String>)> {
    INSPECT_VERB.find(text)?;
    INSPECT_OBJECT.find(text)?;
    let protocol = PROTOCOL.captures(text).map(|c| c[1].to_lowercase()).unwrap_or_else(|| "ip".into());
    let lower = text.to_lowercase();
    let mut params = BTreeMap::from([("protocol".to_string(), protocol)]);
    if lower.contains("spoof") {
        params.insert("spoof_check".into(), "true".into());
    }
    if lower.contains("malicious") {
        params.insert("detect_malicious".into(), "true".into());
    }
    Some((IntentKind::PacketInspection, params))
}

fn capacity_rule(text: &str) -> Option<(IntentKind, BTreeMap<String, String>)> {
    if CAPACITY_WORD.is_match(text) {
        if let Some(u) = PERCENT.captures(text).and_then(|c| fraction(&c[1])) {
            let window = hour_window(text).unwrap_or_else(|| "0-24".into());
            return Some((
                IntentKind::CapacityConstraint,
                BTreeMap::from([("u_max".to_string(), u), ("window".to_string(), window)]),
            ));
        }
    }
    PLANNING.find(text)?;
    let mut params = BTreeMap::new();
    if let Some(w) = hour_window(text) {
        params.insert("window".to_string(), w);
    }
    Some((IntentKind::CapacityPlanning, params))
}

const RULES: [Rule; 5] = [access_rule, qos_rule, config_rule, inspection_rule, capacity_rule];

/// Classifies an intent sentence with the ordered keyword cascade.
pub fn parse_intent_pattern(text: &str) -> Result<Intent, IntentError> {
    let (kind, params) =
        RULES.iter().find_map(|rule| rule(text)).ok_or_else(|| IntentError::Unrecognized(text.to_string()))?;
    let constraint_text = match kind {
        IntentKind::CapacityConstraint => text.to_string(),
        _ => String::new(),
    };
    Ok(Intent {
        kind,
        params,
        task_text: text.to_string(),
        state_text: String::new(),
        constraint_text,
        source: IntentSource::Pattern,
    })
}
