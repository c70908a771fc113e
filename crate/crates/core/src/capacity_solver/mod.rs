//! Calculator core: single-path multicommodity routing over the IP layer,
//! integer module sizing under a utilization cap, and cost minimization.
//!
//! Two independent search routes share one cost function:
//! [`optimize`] (shortest-path start plus first-improvement local search over
//! k candidate paths) and [`brute_force_oracle`] (exhaustive enumeration of
//! every simple path per demand, for small instances).
//!
//! Sizing rule: a link needs `ceil(peak_load / (u_max * module))` modules for
//! demands overlapping the peak window, and `ceil(hourly_load / module)` for
//! every off-peak hour. Modules already installed on a link are kept and are
//! free; only modules beyond them are charged. Fibers created by a what-if
//! action are charged once a route rides them.

mod oracle;
mod paths;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net_model::{validate_topology, Topology, TimeWindow, TrafficMatrix};

pub use oracle::{brute_force_oracle, OracleLimits};
pub use paths::{all_simple_paths, k_shortest_paths, IpPath};
use paths::IpGraph;

/// Slack allowed when checking `load <= u_max * capacity` on floats.
pub const UTILIZATION_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("demand {index} references unknown node `{node}`")]
    UnknownNode { index: usize, node: String },
    #[error("instance exceeds oracle limits: {0}")]
    LimitExceeded(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub module_cost: f64,
    pub fiber_cost_per_km: f64,
    pub fiber_fixed_cost: f64,
    pub currency: String,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { module_cost: 1.0, fiber_cost_per_km: 0.5, fiber_fixed_cost: 10.0, currency: "units".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningProblem {
    pub topology: Topology,
    pub traffic: TrafficMatrix,
    pub u_max: f64,
    pub peak_window: TimeWindow,
    pub cost: CostModel,
    pub k_paths: usize,
}

impl PlanningProblem {
    pub fn new(topology: Topology, traffic: TrafficMatrix) -> Self {
        PlanningProblem {
            topology,
            traffic,
            u_max: 0.8,
            peak_window: TimeWindow::BUSINESS_HOURS,
            cost: CostModel::default(),
            k_paths: 3,
        }
    }

    pub fn check(&self) -> Result<(), SolverError> {
        if !(self.u_max > 0.0 && self.u_max <= 1.0) {
            return Err(SolverError::InvalidProblem(format!("u_max must lie in (0,1], got {}", self.u_max)));
        }
        if self.k_paths == 0 {
            return Err(SolverError::InvalidProblem("k_paths must be at least 1".into()));
        }
        let c = &self.cost;
        if [c.module_cost, c.fiber_cost_per_km, c.fiber_fixed_cost].iter().any(|v| !(*v >= 0.0)) {
            return Err(SolverError::InvalidProblem("costs must be nonnegative".into()));
        }
        if let Some(v) = validate_topology(&self.topology).first() {
            return Err(SolverError::InvalidProblem(format!("{}: {}", v.subject_id, v.message)));
        }
        for (index, d) in self.traffic.demands.iter().enumerate() {
            for node in [&d.src, &d.dst] {
                if self.topology.node(node).is_none() {
                    return Err(SolverError::UnknownNode { index, node: node.clone() });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub demand: usize,
    pub nodes: Vec<String>,
    pub links: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AddedFiber {
    pub fiber_id: String,
    pub length_km: f64,
}

impl AddedFiber {
    pub fn cost(&self, c: &CostModel) -> f64 {
        c.fiber_fixed_cost + self.length_km * c.fiber_cost_per_km
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CapacityPlan {
    pub routes: Vec<Route>,
    /// Demands with no IP-layer path.
    pub unrouted: Vec<usize>,
    pub modules: BTreeMap<String, u32>,
    pub installed_modules: BTreeMap<String, u32>,
    pub link_load_gbps: BTreeMap<String, f64>,
    pub utilization: BTreeMap<String, f64>,
    pub added_fibers: Vec<AddedFiber>,
    pub total_cost: f64,
    pub feasible: bool,
    pub u_max: f64,
}

impl CapacityPlan {
    pub fn max_utilization(&self) -> f64 {
        self.utilization.values().copied().fold(0.0, f64::max)
    }

    /// Modules charged by the cost model (beyond those already installed).
    pub fn new_modules(&self) -> u64 {
        self.modules
            .iter()
            .map(|(id, &m)| u64::from(m.saturating_sub(self.installed_modules.get(id).copied().unwrap_or(0))))
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }
}

fn modules_for(load: f64, u: f64, module_size: f64) -> u32 {
    if load <= 0.0 {
        return 0;
    }
    let ratio = load / (u * module_size);
    let nearest = ratio.round();
    let n = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { ratio.ceil() };
    (n as u32).max(1)
}

/// Modules needed per link so that `load <= u_max * modules * module_size`.
pub fn size_links(t: &Topology, load: &BTreeMap<String, f64>, u_max: f64) -> BTreeMap<String, u32> {
    t.ip_links
        .iter()
        .map(|l| {
            let gbps = load.get(&l.id).copied().unwrap_or(0.0);
            (l.id.clone(), modules_for(gbps, u_max, l.module_size_gbps))
        })
        .collect()
}

/// Cost of a plan: charged modules plus every added fiber it uses.
pub fn plan_cost(plan: &CapacityPlan, c: &CostModel) -> f64 {
    plan.new_modules() as f64 * c.module_cost + plan.added_fibers.iter().map(|f| f.cost(c)).sum::<f64>()
}

/// Peak load per link for fixed routes; only demands overlapping the peak
/// window count.
pub fn link_loads(p: &PlanningProblem, routes: &[Route]) -> BTreeMap<String, f64> {
    let mut load: BTreeMap<String, f64> = p.topology.ip_links.iter().map(|l| (l.id.clone(), 0.0)).collect();
    for r in routes {
        let d = &p.traffic.demands[r.demand];
        if d.window.overlap_hours(&p.peak_window) == 0 {
            continue;
        }
        for l in &r.links {
            *load.entry(l.clone()).or_insert(0.0) += d.gbps;
        }
    }
    load
}

/// Index-based evaluation shared by both searches so that identical route
/// assignments always produce bit-identical costs.
pub(crate) struct Evaluator<'a> {
    p: &'a PlanningProblem,
    pub(crate) graph: IpGraph,
    link_size: Vec<f64>,
    link_installed: Vec<u32>,
    /// For each link, the added fibers it rides (indices into `added`).
    link_added: Vec<Vec<usize>>,
    added: Vec<AddedFiber>,
    peak: Vec<bool>,
    offpeak_hours: Vec<u8>,
}

/// A demand's chosen path as link indices into the evaluator's graph.
pub(crate) type LinkSeq = Vec<usize>;

impl<'a> Evaluator<'a> {
    pub(crate) fn new(p: &'a PlanningProblem) -> Self {
        let graph = IpGraph::new(&p.topology);
        let link_pos = |id: &str| graph.link_ids.iter().position(|l| l == id);
        let mut link_size = vec![0.0; graph.link_ids.len()];
        let mut link_installed = vec![0; graph.link_ids.len()];
        let mut link_added = vec![Vec::new(); graph.link_ids.len()];
        let added: Vec<(String, AddedFiber)> = p
            .topology
            .fibers
            .iter()
            .filter(|f| f.added)
            .map(|f| {
                (
                    f.id.clone(),
                    AddedFiber { fiber_id: f.id.clone(), length_km: f.length_km },
                )
            })
            .collect();
        for l in &p.topology.ip_links {
            if let Some(i) = link_pos(&l.id) {
                link_size[i] = l.module_size_gbps;
                link_installed[i] = l.capacity_modules;
                link_added[i] =
                    added.iter().enumerate().filter(|(_, (fid, _))| l.fiber_path.contains(fid)).map(|(j, _)| j).collect();
            }
        }
        let peak = p.traffic.demands.iter().map(|d| d.window.overlap_hours(&p.peak_window) > 0).collect();
        let offpeak_hours = (0..24u8).filter(|h| !p.peak_window.contains_hour(*h)).collect();
        Evaluator {
            p,
            graph,
            link_size,
            link_installed,
            link_added,
            added: added.into_iter().map(|(_, a)| a).collect(),
            peak,
            offpeak_hours,
        }
    }

    fn loads(&self, assignment: &[Option<&LinkSeq>]) -> (Vec<f64>, Vec<u32>, Vec<bool>) {
        let n = self.graph.link_ids.len();
        let mut peak = vec![0.0; n];
        let mut used = vec![false; n];
        let mut offpeak = vec![vec![0.0; self.offpeak_hours.len()]; n];
        for (d, path) in assignment.iter().enumerate() {
            let Some(path) = path else { continue };
            let demand = &self.p.traffic.demands[d];
            for &l in path.iter() {
                used[l] = true;
                if self.peak[d] {
                    peak[l] += demand.gbps;
                }
                for (slot, &h) in self.offpeak_hours.iter().enumerate() {
                    if demand.window.contains_hour(h) {
                        offpeak[l][slot] += demand.gbps;
                    }
                }
            }
        }
        let modules = (0..n)
            .map(|l| {
                let busiest_offpeak = offpeak[l].iter().copied().fold(0.0, f64::max);
                modules_for(peak[l], self.p.u_max, self.link_size[l])
                    .max(modules_for(busiest_offpeak, 1.0, self.link_size[l]))
                    .max(self.link_installed[l])
            })
            .collect();
        (peak, modules, used)
    }

    fn used_added(&self, used: &[bool]) -> Vec<bool> {
        let mut out = vec![false; self.added.len()];
        for (l, &u) in used.iter().enumerate() {
            if u {
                for &a in &self.link_added[l] {
                    out[a] = true;
                }
            }
        }
        out
    }

    pub(crate) fn cost(&self, assignment: &[Option<&LinkSeq>]) -> f64 {
        let (_, modules, used) = self.loads(assignment);
        let charged: u64 = modules
            .iter()
            .zip(&self.link_installed)
            .map(|(&m, &inst)| u64::from(m.saturating_sub(inst)))
            .sum();
        let fibers: f64 = self
            .used_added(&used)
            .iter()
            .zip(&self.added)
            .filter(|(u, _)| **u)
            .map(|(_, a)| a.cost(&self.p.cost))
            .sum();
        charged as f64 * self.p.cost.module_cost + fibers
    }

    pub(crate) fn link_seq(&self, path: &IpPath) -> LinkSeq {
        path.links
            .iter()
            .map(|id| self.graph.link_ids.iter().position(|l| l == id).expect("path uses known links"))
            .collect()
    }

    pub(crate) fn build_plan(&self, assignment: &[Option<&LinkSeq>]) -> CapacityPlan {
        let (peak, modules, used) = self.loads(assignment);
        let mut plan = CapacityPlan { u_max: self.p.u_max, ..Default::default() };
        for (d, path) in assignment.iter().enumerate() {
            match path {
                Some(links) => {
                    let demand = &self.p.traffic.demands[d];
                    let mut nodes = vec![demand.src.clone()];
                    let mut at = demand.src.as_str();
                    for &l in links.iter() {
                        let link = self.p.topology.ip_link(&self.graph.link_ids[l]).expect("known link");
                        at = link.other_end(at).expect("route is a chain");
                        nodes.push(at.to_string());
                    }
                    plan.routes.push(Route {
                        demand: d,
                        nodes,
                        links: links.iter().map(|&l| self.graph.link_ids[l].clone()).collect(),
                    });
                }
                None => plan.unrouted.push(d),
            }
        }
        let mut within_cap = true;
        for (l, id) in self.graph.link_ids.iter().enumerate() {
            let util = if modules[l] > 0 { peak[l] / (f64::from(modules[l]) * self.link_size[l]) } else { 0.0 };
            within_cap &= util <= self.p.u_max + UTILIZATION_EPS;
            plan.modules.insert(id.clone(), modules[l]);
            plan.installed_modules.insert(id.clone(), self.link_installed[l]);
            plan.link_load_gbps.insert(id.clone(), peak[l]);
            plan.utilization.insert(id.clone(), util);
        }
        plan.added_fibers = self
            .used_added(&used)
            .into_iter()
            .zip(&self.added)
            .filter(|(u, _)| *u)
            .map(|(_, a)| a.clone())
            .collect();
        plan.total_cost = plan_cost(&plan, &self.p.cost);
        debug_assert_eq!(plan.total_cost.to_bits(), self.cost(assignment).to_bits());
        plan.feasible = plan.unrouted.is_empty() && within_cap;
        plan
    }
}

/// Heuristic capacity plan: each demand starts on its shortest path, then
/// demands (in input order) move to the first of their k candidate paths that
/// strictly lowers total cost, until a full pass makes no move.
///
/// Demands without any IP-layer path are listed in `unrouted` and the plan is
/// marked infeasible.
pub fn optimize(p: &PlanningProblem) -> Result<CapacityPlan, SolverError> {
    p.check()?;
    let eval = Evaluator::new(p);
    let candidates: Vec<Vec<LinkSeq>> = p
        .traffic
        .demands
        .iter()
        .map(|d| {
            let (s, t) = (eval.graph.node_index(&d.src), eval.graph.node_index(&d.dst));
            match (s, t) {
                (Some(s), Some(t)) => eval.graph.k_shortest(s, t, p.k_paths).iter().map(|path| eval.link_seq(path)).collect(),
                _ => Vec::new(),
            }
        })
        .collect();

    let mut choice: Vec<Option<usize>> = candidates.iter().map(|c| if c.is_empty() { None } else { Some(0) }).collect();
    let assignment = |choice: &[Option<usize>]| -> Vec<Option<&LinkSeq>> {
        choice.iter().zip(&candidates).map(|(c, cands)| c.map(|i| &cands[i])).collect()
    };
    let mut best = eval.cost(&assignment(&choice));

    loop {
        let mut improved = false;
        for d in 0..choice.len() {
            let Some(current) = choice[d] else { continue };
            for alt in 0..candidates[d].len() {
                if alt == current {
                    continue;
                }
                choice[d] = Some(alt);
                let cost = eval.cost(&assignment(&choice));
                if cost < best {
                    best = cost;
                    improved = true;
                    break;
                }
                choice[d] = Some(current);
            }
        }
        if !improved {
            break;
        }
    }
    Ok(eval.build_plan(&assignment(&choice)))
}
