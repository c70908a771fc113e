//! Recomputes a plan's loads, sizing and cost from its routes alone.

use std::collections::{BTreeMap, BTreeSet};

use chatnet_core::capacity_solver::{CapacityPlan, PlanningProblem};

const EPS: f64 = 1e-9;

fn overlaps(s: u8, e: u8, ps: u8, pe: u8) -> bool {
    s.max(ps) < e.min(pe)
}

/// Every failed check as a message; empty means the plan is consistent,
/// fully routed, within the cap and minimally sized.
pub fn check_plan(p: &PlanningProblem, plan: &CapacityPlan) -> Vec<String> {
    let mut errs = Vec::new();
    let t = &p.topology;
    let (ps, pe) = (p.peak_window.start_hour, p.peak_window.end_hour);

    let routed: BTreeSet<usize> = plan.routes.iter().map(|r| r.demand).collect();
    if routed.len() != p.traffic.demands.len() || !plan.unrouted.is_empty() {
        errs.push(format!("routed {routed:?}, unrouted {:?}", plan.unrouted));
    }

    let mut peak: BTreeMap<&str, f64> = t.ip_links.iter().map(|l| (l.id.as_str(), 0.0)).collect();
    let mut hourly: BTreeMap<&str, [f64; 24]> = t.ip_links.iter().map(|l| (l.id.as_str(), [0.0; 24])).collect();
    let mut used_fibers = BTreeSet::new();
    for r in &plan.routes {
        let d = &p.traffic.demands[r.demand];
        let mut at = d.src.as_str();
        let mut seen = BTreeSet::from([at]);
        for id in &r.links {
            let Some(l) = t.ip_link(id) else {
                errs.push(format!("route {} uses unknown link {id}", r.demand));
                break;
            };
            at = if l.a == at {
                &l.b
            } else if l.b == at {
                &l.a
            } else {
                errs.push(format!("route {} breaks at {id}", r.demand));
                break;
            };
            if !seen.insert(at) {
                errs.push(format!("route {} revisits {at}", r.demand));
            }
            used_fibers.extend(l.fiber_path.iter().map(String::as_str));
            if overlaps(d.window.start_hour, d.window.end_hour, ps, pe) {
                *peak.get_mut(id.as_str()).unwrap() += d.gbps;
            }
            for h in d.window.start_hour..d.window.end_hour {
                hourly.get_mut(id.as_str()).unwrap()[h as usize] += d.gbps;
            }
        }
        if at != d.dst {
            errs.push(format!("route {} ends at {at}, not {}", r.demand, d.dst));
        }
    }

    let mut charged = 0u64;
    for l in &t.ip_links {
        let id = l.id.as_str();
        let m = plan.modules.get(id).copied().unwrap_or(0);
        let load = peak[id];
        if (plan.link_load_gbps.get(id).copied().unwrap_or(f64::NAN) - load).abs() > EPS {
            errs.push(format!("{id}: reported load {:?}, recomputed {load}", plan.link_load_gbps.get(id)));
        }
        let cap = f64::from(m) * l.module_size_gbps;
        if m == 0 {
            if load > 0.0 {
                errs.push(format!("{id}: load {load} on zero modules"));
            }
        } else if load / cap > p.u_max + EPS {
            errs.push(format!("{id}: utilization {} above {}", load / cap, p.u_max));
        }
        let offpeak = (0..24u8).filter(|h| !(ps <= *h && *h < pe)).map(|h| hourly[id][h as usize]).fold(0.0, f64::max);
        if offpeak > cap + EPS {
            errs.push(format!("{id}: off-peak load {offpeak} above capacity {cap}"));
        }
        if m < l.capacity_modules {
            errs.push(format!("{id}: {m} modules below installed {}", l.capacity_modules));
        }
        if m > l.capacity_modules && m > 0 {
            let smaller = f64::from(m - 1) * l.module_size_gbps;
            let fits = load <= p.u_max * smaller * (1.0 - EPS) && offpeak <= smaller * (1.0 - EPS);
            if fits {
                errs.push(format!("{id}: {m} modules where {} suffice", m - 1));
            }
        }
        charged += u64::from(m.saturating_sub(l.capacity_modules));
    }

    let fibers: f64 = t
        .fibers
        .iter()
        .filter(|f| f.added && used_fibers.contains(f.id.as_str()))
        .map(|f| p.cost.fiber_fixed_cost + f.length_km * p.cost.fiber_cost_per_km)
        .sum();
    let cost = charged as f64 * p.cost.module_cost + fibers;
    if (cost - plan.total_cost).abs() > EPS * cost.max(1.0) {
        errs.push(format!("cost {} but recomputed {cost}", plan.total_cost));
    }
    errs
}
