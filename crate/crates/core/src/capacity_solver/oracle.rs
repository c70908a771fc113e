//! Exact optimum for small instances by exhaustive enumeration.

use super::{CapacityPlan, Evaluator, LinkSeq, PlanningProblem, SolverError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_nodes: usize,
    pub max_demands: usize,
    /// Upper bound on the number of joint route assignments enumerated.
    pub max_assignments: u64,
}

impl OracleLimits {
    pub const HARD_MAX_NODES: usize = 8;
    pub const HARD_MAX_DEMANDS: usize = 4;
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_nodes: Self::HARD_MAX_NODES,
            max_demands: Self::HARD_MAX_DEMANDS,
            max_assignments: 2_000_000,
        }
    }
}

/// Minimum-cost plan over every joint assignment of demands to simple IP
/// paths. Ties go to the lexicographically smallest assignment, comparing
/// demands in order by (node sequence, link sequence).
pub fn brute_force_oracle(p: &PlanningProblem, limits: OracleLimits) -> Result<CapacityPlan, SolverError> {
    let max_nodes = limits.max_nodes.min(OracleLimits::HARD_MAX_NODES);
    let max_demands = limits.max_demands.min(OracleLimits::HARD_MAX_DEMANDS);
    if p.topology.nodes.len() > max_nodes {
        return Err(SolverError::LimitExceeded(format!("{} nodes > {max_nodes}", p.topology.nodes.len())));
    }
    if p.traffic.demands.len() > max_demands {
        return Err(SolverError::LimitExceeded(format!("{} demands > {max_demands}", p.traffic.demands.len())));
    }
    p.check()?;

    let eval = Evaluator::new(p);
    // Candidate lists per demand in lexicographic (nodes, links) order so the
    // odometer below visits assignments in lexicographic order.
    let options: Vec<Vec<LinkSeq>> = p
        .traffic
        .demands
        .iter()
        .map(|d| {
            let (s, t) = (eval.graph.node_index(&d.src), eval.graph.node_index(&d.dst));
            let mut paths = match (s, t) {
                (Some(s), Some(t)) => eval.graph.all_simple_paths(s, t),
                _ => Vec::new(),
            };
            paths.sort_by(|a, b| a.nodes.cmp(&b.nodes).then_with(|| a.links.cmp(&b.links)));
            paths.iter().map(|path| eval.link_seq(path)).collect()
        })
        .collect();

    let total: u64 = options.iter().map(|o| o.len().max(1) as u64).try_fold(1u64, |acc, n| acc.checked_mul(n)).unwrap_or(u64::MAX);
    if total > limits.max_assignments {
        return Err(SolverError::LimitExceeded(format!("{total} joint assignments > {}", limits.max_assignments)));
    }

    let routable: Vec<usize> = (0..options.len()).filter(|&d| !options[d].is_empty()).collect();
    let mut idx = vec![0usize; options.len()];
    let assignment = |idx: &[usize]| -> Vec<Option<&LinkSeq>> {
        options.iter().zip(idx).map(|(o, &i)| o.get(i)).collect()
    };

    let mut best_idx = idx.clone();
    let mut best_cost = eval.cost(&assignment(&idx));
    'outer: loop {
        // advance the odometer, last routable demand fastest
        let mut pos = routable.len();
        loop {
            if pos == 0 {
                break 'outer;
            }
            pos -= 1;
            let d = routable[pos];
            idx[d] += 1;
            if idx[d] < options[d].len() {
                break;
            }
            idx[d] = 0;
        }
        let cost = eval.cost(&assignment(&idx));
        if cost < best_cost {
            best_cost = cost;
            best_idx.clone_from(&idx);
        }
    }
    Ok(eval.build_plan(&assignment(&best_idx)))
}
