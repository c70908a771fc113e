use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::IntentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AclAction {
    Permit,
    Deny,
}

/// IPv4 prefix; `any` is the zero-length prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prefix {
    pub addr: u32,
    pub len: u8,
}

impl Prefix {
    pub const ANY: Prefix = Prefix { addr: 0, len: 0 };

    fn mask(len: u8) -> u32 {
        if len == 0 { 0 } else { u32::MAX << (32 - u32::from(len)) }
    }

    pub fn overlaps(&self, other: &Prefix) -> bool {
        let m = Self::mask(self.len.min(other.len));
        self.addr & m == other.addr & m
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.len {
            0 => f.write_str("any"),
            32 => write!(f, "{}", Ipv4Addr::from(self.addr)),
            n => write!(f, "{}/{n}", Ipv4Addr::from(self.addr)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AclRule {
    pub action: AclAction,
    pub protocol: String,
    pub src: Prefix,
    pub dst: Prefix,
}

impl AclRule {
    pub fn overlaps(&self, other: &AclRule) -> bool {
        let proto = self.protocol == "ip" || other.protocol == "ip" || self.protocol == other.protocol;
        proto && self.src.overlaps(&other.src) && self.dst.overlaps(&other.dst)
    }
}

impl fmt::Display for AclRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let action = match self.action {
            AclAction::Permit => "permit",
            AclAction::Deny => "deny",
        };
        write!(f, "{action} {} {} {}", self.protocol, self.src, self.dst)
    }
}

const PROTOCOLS: [&str; 4] = ["ip", "tcp", "udp", "icmp"];

fn parse_prefix<'a>(tokens: &mut impl Iterator<Item = &'a str>, line: &str) -> Result<Prefix, IntentError> {
    let bad = || IntentError::Parse(format!("bad address in `{line}`"));
    let tok = tokens.next().ok_or_else(bad)?;
    let (addr, len) = match tok {
        "any" => return Ok(Prefix::ANY),
        "host" => (tokens.next().ok_or_else(bad)?, 32),
        t => match t.split_once('/') {
            Some((a, l)) => (a, l.parse::<u8>().ok().filter(|l| *l <= 32).ok_or_else(bad)?),
            None => (t, 32),
        },
    };
    let ip: Ipv4Addr = addr.parse().map_err(|_| bad())?;
    let addr = u32::from(ip) & Prefix::mask(len);
    Ok(Prefix { addr, len })
}

/// Parses ACL text: optional `ip access-list ...` header and `!` comment
/// lines, then rules `[seq] permit|deny <proto> <src> <dst>`.
pub fn parse_acl(body: &str) -> Result<Vec<AclRule>, IntentError> {
    let mut rules = Vec::new();
    for raw in body.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('!') || line.starts_with("ip access-list") {
            continue;
        }
        let mut tokens = line.split_whitespace().peekable();
        if tokens.peek().is_some_and(|t| t.chars().all(|c| c.is_ascii_digit())) {
            tokens.next();
        }
        let action = match tokens.next() {
            Some("permit") => AclAction::Permit,
            Some("deny") => AclAction::Deny,
            _ => return Err(IntentError::Parse(format!("expected permit or deny in `{line}`"))),
        };
        let protocol = tokens
            .next()
            .filter(|p| PROTOCOLS.contains(p))
            .ok_or_else(|| IntentError::Parse(format!("unknown protocol in `{line}`")))?
            .to_string();
        let src = parse_prefix(&mut tokens, line)?;
        let dst = parse_prefix(&mut tokens, line)?;
        if tokens.next().is_some() {
            return Err(IntentError::Parse(format!("trailing tokens in `{line}`")));
        }
        rules.push(AclRule { action, protocol, src, dst });
    }
    if rules.is_empty() {
        return Err(IntentError::Parse("ACL has no rules".into()));
    }
    Ok(rules)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_shapes() {
        let rules = parse_acl("ip access-list extended X\n 10 deny ip any 192.168.1.5\n 20 permit tcp host 10.0.0.1 10.1.0.0/16\n!").unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].to_string(), "deny ip any 192.168.1.5");
        assert_eq!(rules[1].to_string(), "permit tcp 10.0.0.1 10.1.0.0/16");
    }

    #[test]
    fn prefix_overlap() {
        let net = Prefix { addr: u32::from(Ipv4Addr::new(10, 1, 0, 0)), len: 16 };
        let host = Prefix { addr: u32::from(Ipv4Addr::new(10, 1, 2, 3)), len: 32 };
        let other = Prefix { addr: u32::from(Ipv4Addr::new(10, 2, 0, 0)), len: 16 };
        assert!(net.overlaps(&host) && host.overlaps(&net));
        assert!(!net.overlaps(&other));
        assert!(Prefix::ANY.overlaps(&other));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_acl("deny ip any").is_err());
        assert!(parse_acl("deny gre any any").is_err());
        assert!(parse_acl("deny ip any 300.1.1.1").is_err());
        assert!(parse_acl("").is_err());
    }
}
