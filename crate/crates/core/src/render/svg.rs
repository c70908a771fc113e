//! Reader for the emitted DOT dialect and a fixed-canvas SVG writer.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use super::{EdgeStyle, Layout, RenderError, RenderSpec};

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 600.0;
const MARGIN: f64 = 60.0;
const NODE_RADIUS: f64 = 14.0;
const PARALLEL_GAP: f64 = 7.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DotNode {
    pub id: String,
    pub attrs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DotEdge {
    pub a: String,
    pub b: String,
    pub attrs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DotGraph {
    pub nodes: Vec<DotNode>,
    pub edges: Vec<DotEdge>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    Sym(char),
    EdgeOp,
}

fn tokenize(text: &str) -> Result<Vec<Tok>, RenderError> {
    let mut toks = Vec::new();
    let mut it = text.chars().peekable();
    while let Some(&c) = it.peek() {
        match c {
            c if c.is_whitespace() => {
                it.next();
            }
            '/' => {
                it.next();
                if it.next() != Some('/') {
                    return Err(RenderError::Dot("stray `/`".into()));
                }
                while it.next().is_some_and(|c| c != '\n') {}
            }
            '#' => while it.next().is_some_and(|c| c != '\n') {},
            '{' | '}' | '[' | ']' | '=' | ';' | ',' => {
                toks.push(Tok::Sym(c));
                it.next();
            }
            '"' => {
                it.next();
                let mut s = String::new();
                loop {
                    match it.next() {
                        Some('\\') => match it.next() {
                            Some(e @ ('"' | '\\')) => s.push(e),
                            Some(e) => {
                                s.push('\\');
                                s.push(e);
                            }
                            None => return Err(RenderError::Dot("unterminated string".into())),
                        },
                        Some('"') => break,
                        Some(ch) => s.push(ch),
                        None => return Err(RenderError::Dot("unterminated string".into())),
                    }
                }
                toks.push(Tok::Id(s));
            }
            '-' if {
                let mut look = it.clone();
                look.next();
                matches!(look.peek(), Some('-' | '>'))
            } =>
            {
                it.next();
                it.next();
                toks.push(Tok::EdgeOp);
            }
            c if c.is_alphanumeric() || c == '_' || c == '.' || c == '-' => {
                let mut s = String::new();
                if c == '-' {
                    s.push(c);
                    it.next();
                }
                while let Some(&ch) = it.peek() {
                    if ch.is_alphanumeric() || ch == '_' || ch == '.' {
                        s.push(ch);
                        it.next();
                    } else {
                        break;
                    }
                }
                toks.push(Tok::Id(s));
            }
            other => return Err(RenderError::Dot(format!("unexpected `{other}`"))),
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn id(&mut self) -> Result<String, RenderError> {
        match self.next() {
            Some(Tok::Id(s)) => Ok(s),
            other => Err(RenderError::Dot(format!("expected identifier, found {other:?}"))),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), RenderError> {
        match self.next() {
            Some(Tok::Sym(s)) if s == c => Ok(()),
            other => Err(RenderError::Dot(format!("expected `{c}`, found {other:?}"))),
        }
    }

    fn attrs(&mut self) -> Result<BTreeMap<String, String>, RenderError> {
        let mut out = BTreeMap::new();
        while self.peek() == Some(&Tok::Sym('[')) {
            self.next();
            loop {
                match self.peek() {
                    Some(Tok::Sym(']')) => {
                        self.next();
                        break;
                    }
                    Some(Tok::Sym(',' | ';')) => {
                        self.next();
                    }
                    _ => {
                        let k = self.id()?;
                        self.expect('=')?;
                        let v = self.id()?;
                        out.insert(k, v);
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn parse_dot(text: &str) -> Result<DotGraph, RenderError> {
    let mut p = Parser { toks: tokenize(text)?, pos: 0 };
    let mut head = p.id()?;
    if head == "strict" {
        head = p.id()?;
    }
    if head != "graph" && head != "digraph" {
        return Err(RenderError::Dot(format!("expected `graph`, found `{head}`")));
    }
    if matches!(p.peek(), Some(Tok::Id(_))) {
        p.next();
    }
    p.expect('{')?;

    let mut g = DotGraph::default();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let touch = |g: &mut DotGraph, index: &mut BTreeMap<String, usize>, id: &str| {
        if !index.contains_key(id) {
            index.insert(id.to_string(), g.nodes.len());
            g.nodes.push(DotNode { id: id.to_string(), attrs: BTreeMap::new() });
        }
    };
    loop {
        match p.peek() {
            Some(Tok::Sym('}')) => {
                p.next();
                break;
            }
            Some(Tok::Sym(';')) => {
                p.next();
                continue;
            }
            None => return Err(RenderError::Dot("missing `}`".into())),
            _ => {}
        }
        let first = p.id()?;
        if matches!(first.as_str(), "graph" | "node" | "edge") && p.peek() == Some(&Tok::Sym('[')) {
            p.attrs()?;
            continue;
        }
        if p.peek() == Some(&Tok::Sym('=')) {
            p.next();
            p.id()?;
            continue;
        }
        if p.peek() == Some(&Tok::EdgeOp) {
            let mut chain = vec![first];
            while p.peek() == Some(&Tok::EdgeOp) {
                p.next();
                chain.push(p.id()?);
            }
            let attrs = p.attrs()?;
            for pair in chain.windows(2) {
                touch(&mut g, &mut index, &pair[0]);
                touch(&mut g, &mut index, &pair[1]);
                g.edges.push(DotEdge { a: pair[0].clone(), b: pair[1].clone(), attrs: attrs.clone() });
            }
        } else {
            let attrs = p.attrs()?;
            touch(&mut g, &mut index, &first);
            g.nodes[index[&first]].attrs.extend(attrs);
        }
    }
    Ok(g)
}

fn parse_pos(raw: &str) -> Option<(f64, f64)> {
    let (x, y) = raw.trim_end_matches('!').split_once(',')?;
    Some((x.trim().parse().ok()?, y.trim().parse().ok()?))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn place(g: &DotGraph, layout: Layout) -> Result<Vec<(f64, f64)>, RenderError> {
    let n = g.nodes.len();
    match layout {
        Layout::Circular => {
            let (cx, cy) = (SVG_WIDTH / 2.0, SVG_HEIGHT / 2.0);
            let r = (SVG_HEIGHT / 2.0 - MARGIN).max(0.0);
            Ok((0..n)
                .map(|i| {
                    let angle = 2.0 * PI * i as f64 / n as f64 - PI / 2.0;
                    (cx + r * angle.cos(), cy + r * angle.sin())
                })
                .collect())
        }
        Layout::Coords => {
            let raw = g
                .nodes
                .iter()
                .map(|node| {
                    node.attrs
                        .get("pos")
                        .and_then(|p| parse_pos(p))
                        .ok_or_else(|| RenderError::Layout(format!("node `{}` has no coordinates", node.id)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if raw.is_empty() {
                return Ok(raw);
            }
            let (min_x, max_x) = raw.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
            let (min_y, max_y) = raw.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
            let (span_x, span_y) = (max_x - min_x, max_y - min_y);
            let avail_x = SVG_WIDTH - 2.0 * MARGIN;
            let avail_y = SVG_HEIGHT - 2.0 * MARGIN;
            let scale = match (span_x > 0.0, span_y > 0.0) {
                (true, true) => (avail_x / span_x).min(avail_y / span_y),
                (true, false) => avail_x / span_x,
                (false, true) => avail_y / span_y,
                (false, false) => 0.0,
            };
            // centre the drawing; y grows upward in kilometres, downward in SVG
            let off_x = (SVG_WIDTH - span_x * scale) / 2.0;
            let off_y = (SVG_HEIGHT - span_y * scale) / 2.0;
            Ok(raw.iter().map(|(x, y)| (off_x + (x - min_x) * scale, SVG_HEIGHT - off_y - (y - min_y) * scale)).collect())
        }
    }
}

/// Draws a parsed DOT graph: one circle per node, one line per edge.
/// Parallel edges between the same pair are offset sideways.
pub fn dot_to_svg(dot: &str, spec: &RenderSpec) -> Result<String, RenderError> {
    spec.check()?;
    let g = parse_dot(dot)?;
    let pos = place(&g, spec.layout)?;
    let index: BTreeMap<&str, usize> = g.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();

    let mut bundle: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (e, edge) in g.edges.iter().enumerate() {
        let (a, b) = (index[edge.a.as_str()], index[edge.b.as_str()]);
        bundle.entry((a.min(b), a.max(b))).or_default().push(e);
    }
    let mut offset = vec![0.0; g.edges.len()];
    for members in bundle.values() {
        let mid = (members.len() as f64 - 1.0) / 2.0;
        for (k, &e) in members.iter().enumerate() {
            offset[e] = (k as f64 - mid) * PARALLEL_GAP;
        }
    }

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">",
        w = SVG_WIDTH,
        h = SVG_HEIGHT
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g class=\"edges\">\n");
    for (e, edge) in g.edges.iter().enumerate() {
        let (a, b) = (index[edge.a.as_str()], index[edge.b.as_str()]);
        let ((x1, y1), (x2, y2)) = (pos[a], pos[b]);
        let (dx, dy) = (x2 - x1, y2 - y1);
        let len = (dx * dx + dy * dy).sqrt();
        // perpendicular shift, oriented by the canonical pair so parallel
        // edges fan out on both sides regardless of direction
        let sign = if a <= b { 1.0 } else { -1.0 };
        let (nx, ny) = if len > 0.0 { (-dy / len * sign, dx / len * sign) } else { (0.0, 0.0) };
        let (ox, oy) = (nx * offset[e], ny * offset[e]);
        let style = edge.attrs.get("style").and_then(|s| EdgeStyle::parse(s)).unwrap_or(EdgeStyle::Solid);
        let color = edge.attrs.get("color").map(String::as_str).unwrap_or("black");
        let width = if style == spec.ip_style { 2.5 } else { 1.5 };
        let dash = match style {
            EdgeStyle::Solid => "",
            EdgeStyle::Dashed => " stroke-dasharray=\"8,5\"",
            EdgeStyle::Dotted => " stroke-dasharray=\"2,4\"",
        };
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{}\" stroke-width=\"{}\"{}/>",
            x1 + ox,
            y1 + oy,
            x2 + ox,
            y2 + oy,
            esc(color),
            width,
            dash
        );
        if let Some(label) = edge.attrs.get("label") {
            let _ = writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\" fill=\"{}\">{}</text>",
                (x1 + x2) / 2.0 + ox * 2.0,
                (y1 + y2) / 2.0 + oy * 2.0 - 3.0,
                esc(color),
                esc(label)
            );
        }
    }
    out.push_str("</g>\n<g class=\"nodes\">\n");
    for (i, node) in g.nodes.iter().enumerate() {
        let (x, y) = pos[i];
        let label = node.attrs.get("label").unwrap_or(&node.id);
        let _ = writeln!(
            out,
            "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"{NODE_RADIUS}\" fill=\"#eef3fb\" stroke=\"black\" stroke-width=\"1.5\"/>"
        );
        let _ = writeln!(out, "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{}</text>", y + 4.0, esc(label));
    }
    let _ = writeln!(
        out,
        "</g>\n<text x=\"10\" y=\"{:.0}\" font-size=\"11\">{}: optical fiber; {}: IP link</text>\n</svg>",
        SVG_HEIGHT - 10.0,
        spec.optical_style.as_str(),
        spec.ip_style.as_str()
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRI: &str = r#"graph topology {
  "A" [label="A", pos="0,0!"];
  "B" [label="B", pos="100,0!"];
  "C" [label="C", pos="50,80!"];
  "A" -- "B" [style=dashed, color=gray, label="F1 100km"];
  "A" -- "B" [style=solid, color=green, label="50/100"];
  "B" -- "C" [style=solid, color=red, label="90/100"];
}
"#;

    #[test]
    fn parses_dialect() {
        let g = parse_dot(TRI).unwrap();
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.edges.len(), 3);
        assert_eq!(g.edges[1].attrs["label"], "50/100");
        assert_eq!(g.nodes[2].attrs["pos"], "50,80!");
    }

    #[test]
    fn parses_foreign_dot() {
        let g = parse_dot("strict graph { node [shape=box]; rankdir=LR; a -- b -- c; d }").unwrap();
        assert_eq!(g.nodes.len(), 4);
        assert_eq!(g.edges.len(), 2);
        assert!(parse_dot("graph { a -- }").is_err());
    }

    #[test]
    fn svg_counts_and_determinism() {
        let spec = RenderSpec::default();
        let svg = dot_to_svg(TRI, &spec).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches("<line").count(), 3);
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
        assert_eq!(svg, dot_to_svg(TRI, &spec).unwrap());
        roxmltree::Document::parse(&svg).unwrap();
    }

    #[test]
    fn coords_layout_needs_positions() {
        let err = dot_to_svg("graph { a -- b }", &RenderSpec::default()).unwrap_err();
        assert!(matches!(err, RenderError::Layout(m) if m.contains('a')));
        let spec = RenderSpec { layout: Layout::Circular, ..Default::default() };
        assert!(dot_to_svg("graph { a -- b }", &spec).is_ok());
    }
}
