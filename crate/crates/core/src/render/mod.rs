//! Topology diagrams and plan reports.
//!
//! [`render_dot`] emits a small DOT dialect (nodes and edges with `style`,
//! `color`, `label` and `pos` only). [`dot_to_svg`] reads that dialect back
//! and draws a standalone SVG, so no external layout tool is needed.

mod report;
mod svg;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity_solver::CapacityPlan;
use crate::net_model::Topology;

pub use report::render_report;
pub use svg::{dot_to_svg, parse_dot, DotEdge, DotGraph, DotNode, SVG_HEIGHT, SVG_WIDTH};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("plan references unknown IP link `{0}`")]
    Mismatch(String),
    #[error("layout: {0}")]
    Layout(String),
    #[error("invalid render spec: {0}")]
    BadSpec(String),
    #[error("malformed DOT: {0}")]
    Dot(String),
    #[error("session has no outcome")]
    NoOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeStyle {
    Solid,
    Dashed,
    Dotted,
}

impl EdgeStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeStyle::Solid => "solid",
            EdgeStyle::Dashed => "dashed",
            EdgeStyle::Dotted => "dotted",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "solid" => Some(EdgeStyle::Solid),
            "dashed" => Some(EdgeStyle::Dashed),
            "dotted" => Some(EdgeStyle::Dotted),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    #[default]
    Coords,
    Circular,
}

impl Layout {
    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Coords => "coords",
            Layout::Circular => "circular",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CongestionClass {
    Neutral,
    Green,
    Yellow,
    Orange,
    Red,
}

impl CongestionClass {
    pub const GRADED: [CongestionClass; 4] =
        [CongestionClass::Green, CongestionClass::Yellow, CongestionClass::Orange, CongestionClass::Red];

    pub fn color(self) -> &'static str {
        match self {
            CongestionClass::Neutral => "black",
            CongestionClass::Green => "green",
            CongestionClass::Yellow => "gold",
            CongestionClass::Orange => "orange",
            CongestionClass::Red => "red",
        }
    }
}

pub const OPTICAL_COLOR: &str = "gray";
pub const UNDEPLOYED_COLOR: &str = "lightgray";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    /// Lower bounds of the yellow, orange and red classes.
    pub congestion_thresholds: Vec<f64>,
    pub ip_style: EdgeStyle,
    pub optical_style: EdgeStyle,
    pub layout: Layout,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            congestion_thresholds: vec![0.5, 0.7, 0.8],
            ip_style: EdgeStyle::Solid,
            optical_style: EdgeStyle::Dashed,
            layout: Layout::Coords,
        }
    }
}

impl RenderSpec {
    pub fn check(&self) -> Result<(), RenderError> {
        let t = &self.congestion_thresholds;
        if t.len() != 3 {
            return Err(RenderError::BadSpec(format!("need 3 thresholds, got {}", t.len())));
        }
        if t.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) || t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RenderError::BadSpec(format!("thresholds {t:?} must increase strictly within (0,1]")));
        }
        if self.ip_style == self.optical_style {
            return Err(RenderError::BadSpec("IP and optical layers need distinct styles".into()));
        }
        Ok(())
    }

    /// Class of a utilization value; a threshold belongs to the class above it.
    pub fn class_for(&self, utilization: f64) -> CongestionClass {
        let above = self.congestion_thresholds.iter().filter(|t| utilization >= **t).count();
        CongestionClass::GRADED[above.min(3)]
    }
}

/// Compact number text: at most three decimals, trailing zeros dropped.
pub fn fmt_num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT text for both layers. Fibers come first, then IP links, each sorted
/// by id. With a plan, IP edges are colored by utilization and labeled
/// `load/capacity` in Gbps.
pub fn render_dot(t: &Topology, plan: Option<&CapacityPlan>, spec: &RenderSpec) -> Result<String, RenderError> {
    spec.check()?;
    if let Some(p) = plan {
        let known: BTreeSet<&str> = t.ip_links.iter().map(|l| l.id.as_str()).collect();
        let referenced = p
            .modules
            .keys()
            .chain(p.utilization.keys())
            .chain(p.link_load_gbps.keys())
            .chain(p.routes.iter().flat_map(|r| r.links.iter()));
        for id in referenced {
            if !known.contains(id.as_str()) {
                return Err(RenderError::Mismatch(id.clone()));
            }
        }
    }

    let mut out = String::from("graph topology {\n");
    let mut nodes: Vec<_> = t.nodes.iter().collect();
    nodes.sort_by(|a, b| a.id.cmp(&b.id));
    for n in nodes {
        let label = if n.name.is_empty() { &n.id } else { &n.name };
        let _ = write!(out, "  {} [label={}", quote(&n.id), quote(label));
        if spec.layout == Layout::Coords {
            if let Some((x, y)) = n.coords() {
                let _ = write!(out, ", pos=\"{},{}!\"", fmt_num(x), fmt_num(y));
            }
        }
        out.push_str("];\n");
    }

    let mut fibers: Vec<_> = t.fibers.iter().collect();
    fibers.sort_by(|a, b| a.id.cmp(&b.id));
    for f in fibers {
        let color = if f.deployed { OPTICAL_COLOR } else { UNDEPLOYED_COLOR };
        let _ = writeln!(
            out,
            "  {} -- {} [style={}, color={}, label={}];",
            quote(&f.a),
            quote(&f.b),
            spec.optical_style.as_str(),
            color,
            quote(&format!("{} {}km", f.id, fmt_num(f.length_km)))
        );
    }

    let mut links: Vec<_> = t.ip_links.iter().collect();
    links.sort_by(|a, b| a.id.cmp(&b.id));
    for l in links {
        let (class, label) = match plan {
            Some(p) => {
                let load = p.link_load_gbps.get(&l.id).copied().unwrap_or(0.0);
                let modules = p.modules.get(&l.id).copied().unwrap_or(l.capacity_modules);
                let capacity = f64::from(modules) * l.module_size_gbps;
                let util = p.utilization.get(&l.id).copied().unwrap_or(0.0);
                (spec.class_for(util), format!("{}/{}", fmt_num(load), fmt_num(capacity)))
            }
            None => (CongestionClass::Neutral, l.id.clone()),
        };
        let _ = writeln!(
            out,
            "  {} -- {} [style={}, color={}, label={}];",
            quote(&l.a),
            quote(&l.b),
            spec.ip_style.as_str(),
            class.color(),
            quote(&label)
        );
    }
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_model::parse_topology;

    fn triangle() -> Topology {
        parse_topology(
            r#"{"nodes":[{"id":"A","x_km":0,"y_km":0},{"id":"B","x_km":100,"y_km":0},{"id":"C","x_km":50,"y_km":80}],
                "fibers":[{"id":"F1","a":"A","b":"B"},{"id":"F2","a":"B","b":"C"},{"id":"F3","a":"A","b":"C"}],
                "ip_links":[{"id":"L1","a":"A","b":"B","fiber_path":["F1"]},{"id":"L2","a":"B","b":"C","fiber_path":["F2"]},
                            {"id":"L3","a":"A","b":"C","fiber_path":["F3"]}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn class_boundaries_close_on_the_left() {
        let s = RenderSpec::default();
        assert_eq!(s.class_for(0.0), CongestionClass::Green);
        assert_eq!(s.class_for(0.4999), CongestionClass::Green);
        assert_eq!(s.class_for(0.5), CongestionClass::Yellow);
        assert_eq!(s.class_for(0.7), CongestionClass::Orange);
        assert_eq!(s.class_for(0.75), CongestionClass::Orange);
        assert_eq!(s.class_for(0.8), CongestionClass::Red);
        assert_eq!(s.class_for(1.3), CongestionClass::Red);
    }

    #[test]
    fn bad_specs() {
        let mut s = RenderSpec { congestion_thresholds: vec![0.5, 0.5, 0.8], ..Default::default() };
        assert!(s.check().is_err());
        s.congestion_thresholds = vec![0.5, 0.7, 1.2];
        assert!(s.check().is_err());
        s.congestion_thresholds = vec![0.5, 0.7];
        assert!(s.check().is_err());
    }

    #[test]
    fn neutral_without_plan() {
        let dot = render_dot(&triangle(), None, &RenderSpec::default()).unwrap();
        assert_eq!(dot.matches("style=solid, color=black").count(), 3);
        assert_eq!(dot.matches("style=dashed").count(), 3);
        assert!(dot.contains("pos=\"50,80!\""));
    }

    #[test]
    fn mismatched_plan() {
        let mut plan = CapacityPlan::default();
        plan.modules.insert("L9".into(), 1);
        assert_eq!(render_dot(&triangle(), Some(&plan), &RenderSpec::default()), Err(RenderError::Mismatch("L9".into())));
    }

    #[test]
    fn numbers() {
        assert_eq!(fmt_num(150.0), "150");
        assert_eq!(fmt_num(12.5), "12.5");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(-0.0001), "0");
    }
}
