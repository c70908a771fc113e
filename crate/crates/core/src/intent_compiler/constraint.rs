use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::IntentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bound {
    AtLeast(u8),
    AtMost(u8),
}

/// `if (time>=H and time<=H) { metric <= coefficient * capacity_metric }`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintExpr {
    pub clauses: Vec<Bound>,
    pub metric: String,
    pub coefficient: f64,
    pub capacity_metric: String,
}

impl ConstraintExpr {
    /// Effective hour range `[from, to]` implied by the clauses.
    pub fn hours(&self) -> (u8, u8) {
        self.clauses.iter().fold((0, 24), |(lo, hi), c| match c {
            Bound::AtLeast(h) => (lo.max(*h), hi),
            Bound::AtMost(h) => (lo, hi.min(*h)),
        })
    }

    pub fn infeasibility(&self) -> Option<String> {
        let (lo, hi) = self.hours();
        if lo > hi {
            return Some(format!("time window is empty ({lo} > {hi})"));
        }
        if !(self.coefficient > 0.0 && self.coefficient <= 1.0) {
            return Some(format!("utilization coefficient {} outside (0,1]", self.coefficient));
        }
        None
    }
}

impl fmt::Display for ConstraintExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let clauses: Vec<String> = self
            .clauses
            .iter()
            .map(|c| match c {
                Bound::AtLeast(h) => format!("time>={h}"),
                Bound::AtMost(h) => format!("time<={h}"),
            })
            .collect();
        write!(
            f,
            "if ({}) {{ {} <= {} * {} }}",
            clauses.join(" and "),
            self.metric,
            self.coefficient,
            self.capacity_metric
        )
    }
}

static EXPR: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*if\s*\((?P<cond>[^)]*)\)\s*\{\s*(?P<m>[A-Za-z_]\w*)\s*<=\s*(?P<c>[0-9]*\.?[0-9]+)\s*\*\s*(?P<cap>[A-Za-z_]\w*)\s*\}\s*$")
        .expect("valid regex")
});
static CLAUSE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*time\s*(?P<op>>=|<=)\s*(?P<h>\d{1,2})\s*$").expect("valid regex"));

pub fn parse_constraint_expr(body: &str) -> Result<ConstraintExpr, IntentError> {
    let caps = EXPR
        .captures(body)
        .ok_or_else(|| IntentError::Parse(format!("not a constraint expression: `{}`", body.trim())))?;
    let mut clauses = Vec::new();
    for part in caps["cond"].split(" and ") {
        let c = CLAUSE.captures(part).ok_or_else(|| IntentError::Parse(format!("bad clause `{}`", part.trim())))?;
        let h: u8 = c["h"].parse().map_err(|_| IntentError::Parse(format!("bad hour in `{part}`")))?;
        if h > 24 {
            return Err(IntentError::Parse(format!("hour {h} out of range")));
        }
        clauses.push(if &c["op"] == ">=" { Bound::AtLeast(h) } else { Bound::AtMost(h) });
    }
    Ok(ConstraintExpr {
        clauses,
        metric: caps["m"].to_string(),
        coefficient: caps["c"].parse().map_err(|_| IntentError::Parse("bad coefficient".into()))?,
        capacity_metric: caps["cap"].to_string(),
    })
}
