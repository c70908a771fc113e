//! Random instance generators shared by the property tests and the
//! acceptance runner.

use chatnet_core::capacity_solver::{CostModel, PlanningProblem};
use chatnet_core::net_model::{Demand, FiberLink, IpLink, Node, NodeRole, TimeWindow, Topology, TrafficMatrix};
use proptest::prelude::*;
use proptest::sample::Index;

pub fn window() -> impl Strategy<Value = TimeWindow> {
    (0u8..24).prop_flat_map(|s| (Just(s), s + 1..=24)).prop_map(|(s, e)| TimeWindow::new(s, e).unwrap())
}

#[derive(Debug, Clone)]
struct RawLink {
    length_km: u32,
    installed: u32,
    module_size: f64,
}

fn raw_link() -> impl Strategy<Value = RawLink> {
    (1u32..300, 0u32..=2, prop::sample::select(vec![10.0, 40.0, 100.0]))
        .prop_map(|(length_km, installed, module_size)| RawLink { length_km, installed, module_size })
}

/// Connected topology on `min..=max` nodes: a random spanning tree, up to two
/// extra fibers (possibly planned-but-unbuilt, i.e. `added`), one IP link per
/// fiber and optionally one express link over two consecutive tree fibers.
pub fn topology(min: usize, max: usize) -> impl Strategy<Value = Topology> {
    (min..=max).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((any::<Index>(), raw_link()), n - 1),
            prop::collection::vec((any::<Index>(), any::<Index>(), raw_link(), any::<bool>()), 0..=2),
            prop::option::of((any::<Index>(), raw_link())),
            prop::collection::vec((0u32..1000, 0u32..1000), n),
        )
            .prop_map(build_topology)
    })
}

type TreeEdge = (Index, RawLink);
type ExtraEdge = (Index, Index, RawLink, bool);

fn build_topology(
    (n, tree, extra, express, coords): (usize, Vec<TreeEdge>, Vec<ExtraEdge>, Option<(Index, RawLink)>, Vec<(u32, u32)>),
) -> Topology {
    let id = |i: usize| format!("N{i}");
    let nodes = (0..n)
        .map(|i| Node {
            id: id(i),
            name: String::new(),
            x_km: Some(f64::from(coords[i].0)),
            y_km: Some(f64::from(coords[i].1)),
            role: NodeRole::Core,
        })
        .collect();
    let mut t = Topology { nodes, fibers: Vec::new(), ip_links: Vec::new() };
    let push = |t: &mut Topology, a: usize, b: usize, raw: &RawLink, added: bool| {
        let f = format!("F{}", t.fibers.len() + 1);
        t.fibers.push(FiberLink {
            id: f.clone(),
            a: id(a),
            b: id(b),
            length_km: f64::from(raw.length_km),
            deployed: true,
            added,
        });
        t.ip_links.push(IpLink {
            id: format!("L{}", t.ip_links.len() + 1),
            a: id(a),
            b: id(b),
            fiber_path: vec![f],
            capacity_modules: if added { 0 } else { raw.installed },
            module_size_gbps: raw.module_size,
        });
    };
    let mut parent = vec![0usize; n];
    for (i, (p, raw)) in tree.iter().enumerate() {
        let child = i + 1;
        parent[child] = p.index(child);
        push(&mut t, child, parent[child], raw, false);
    }
    for (a, b, raw, added) in &extra {
        let (a, b) = (a.index(n), b.index(n));
        if a != b {
            push(&mut t, a, b, raw, *added);
        }
    }
    // Express link child -> grandparent riding the child's and the parent's
    // tree fibers (tree fiber of node i is F{i}).
    if let Some((pick, raw)) = express {
        let candidates: Vec<usize> = (1..n).filter(|&c| parent[c] != 0).collect();
        if !candidates.is_empty() {
            let c = candidates[pick.index(candidates.len())];
            let p = parent[c];
            t.ip_links.push(IpLink {
                id: format!("L{}", t.ip_links.len() + 1),
                a: id(c),
                b: id(parent[p]),
                fiber_path: vec![format!("F{c}"), format!("F{p}")],
                capacity_modules: raw.installed,
                module_size_gbps: raw.module_size,
            });
        }
    }
    t
}

/// Up to `max` demands between distinct nodes of an `n`-node topology. Rates
/// are whole Gbps so that sums are exact.
pub fn demands(n: usize, max: usize) -> impl Strategy<Value = TrafficMatrix> {
    prop::collection::vec((any::<Index>(), any::<Index>(), 0u32..=300, window()), 1..=max).prop_map(move |raw| {
        TrafficMatrix {
            demands: raw
                .into_iter()
                .map(|(s, o, gbps, window)| {
                    let src = s.index(n);
                    let dst = (src + 1 + o.index(n - 1)) % n;
                    Demand { src: format!("N{src}"), dst: format!("N{dst}"), gbps: f64::from(gbps), window }
                })
                .collect(),
        }
    })
}

pub fn cost_model() -> impl Strategy<Value = CostModel> {
    (1u32..=8, 0u32..=4, 0u32..=40).prop_map(|(m, km, fixed)| CostModel {
        module_cost: f64::from(m) * 0.5,
        fiber_cost_per_km: f64::from(km) * 0.25,
        fiber_fixed_cost: f64::from(fixed),
        currency: "units".into(),
    })
}

/// Planning problems within the oracle's reach: at most `max_nodes` nodes
/// and `max_demands` demands, random costs, cap and peak window.
pub fn problem(max_nodes: usize, max_demands: usize) -> impl Strategy<Value = PlanningProblem> {
    topology(2, max_nodes)
        .prop_flat_map(move |t| {
            let n = t.nodes.len();
            (Just(t), demands(n, max_demands), cost_model(), 30u32..=100, window(), 1usize..=4)
        })
        .prop_map(|(t, traffic, cost, u, peak, k)| {
            let mut p = PlanningProblem::new(t, traffic);
            p.cost = cost;
            p.u_max = f64::from(u) / 100.0;
            p.peak_window = peak;
            p.k_paths = k;
            p
        })
}
