//! IP-layer path search: Yen's k-shortest loopless paths over a Dijkstra
//! core, plus exhaustive simple-path enumeration for the exact oracle.
//!
//! Link weights are the total length of the fibers an IP link rides. Parallel
//! IP links between the same pair are distinct edges, so a path is identified
//! by its link sequence.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use crate::net_model::Topology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpPath {
    pub nodes: Vec<String>,
    pub links: Vec<String>,
    pub length_km: f64,
}

impl IpPath {
    /// Total order used everywhere paths are ranked: length, then node ids,
    /// then link ids.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.length_km
            .total_cmp(&other.length_km)
            .then_with(|| self.nodes.cmp(&other.nodes))
            .then_with(|| self.links.cmp(&other.links))
    }
}

#[derive(Debug, Clone)]
struct Edge {
    link: usize,
    to: usize,
    weight: f64,
}

/// Index-based view of the IP layer.
#[derive(Debug)]
pub(crate) struct IpGraph {
    pub(crate) node_ids: Vec<String>,
    pub(crate) link_ids: Vec<String>,
    link_weight: Vec<f64>,
    adjacency: Vec<Vec<Edge>>,
    index: BTreeMap<String, usize>,
}

impl IpGraph {
    pub(crate) fn new(t: &Topology) -> Self {
        let mut node_ids: Vec<String> = t.nodes.iter().map(|n| n.id.clone()).collect();
        node_ids.sort();
        let index: BTreeMap<String, usize> = node_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let mut adjacency = vec![Vec::new(); node_ids.len()];
        let mut link_ids = Vec::new();
        let mut link_weight = Vec::new();
        for link in &t.ip_links {
            let (Some(&a), Some(&b)) = (index.get(&link.a), index.get(&link.b)) else {
                continue;
            };
            let li = link_ids.len();
            let weight = t.ip_link_length_km(link);
            link_ids.push(link.id.clone());
            link_weight.push(weight);
            adjacency[a].push(Edge { link: li, to: b, weight });
            adjacency[b].push(Edge { link: li, to: a, weight });
        }
        for edges in &mut adjacency {
            edges.sort_by(|x, y| {
                node_ids[x.to].cmp(&node_ids[y.to]).then_with(|| link_ids[x.link].cmp(&link_ids[y.link]))
            });
        }
        IpGraph { node_ids, link_ids, link_weight, adjacency, index }
    }

    pub(crate) fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    fn path_length(&self, links: &[usize]) -> f64 {
        links.iter().map(|&l| self.link_weight[l]).sum()
    }

    fn to_path(&self, nodes: &[usize], links: &[usize]) -> IpPath {
        IpPath {
            nodes: nodes.iter().map(|&n| self.node_ids[n].clone()).collect(),
            links: links.iter().map(|&l| self.link_ids[l].clone()).collect(),
            length_km: self.path_length(links),
        }
    }

    /// Shortest path avoiding the given nodes and links. Ties settle on the
    /// lower node index first.
    fn dijkstra(
        &self,
        src: usize,
        dst: usize,
        banned_nodes: &[bool],
        banned_links: &HashSet<usize>,
    ) -> Option<(Vec<usize>, Vec<usize>)> {
        #[derive(PartialEq)]
        struct Entry(f64, usize);
        impl Eq for Entry {}
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> Ordering {
                // min-heap
                other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
            }
        }

        let n = self.node_ids.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Entry(0.0, src));
        while let Some(Entry(d, u)) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if u == dst {
                break;
            }
            for e in &self.adjacency[u] {
                if banned_nodes[e.to] || banned_links.contains(&e.link) || done[e.to] {
                    continue;
                }
                let nd = d + e.weight;
                if nd < dist[e.to] {
                    dist[e.to] = nd;
                    prev[e.to] = Some((u, e.link));
                    heap.push(Entry(nd, e.to));
                }
            }
        }
        if !done[dst] {
            return None;
        }
        let mut nodes = vec![dst];
        let mut links = Vec::new();
        let mut at = dst;
        while let Some((p, l)) = prev[at] {
            nodes.push(p);
            links.push(l);
            at = p;
        }
        nodes.reverse();
        links.reverse();
        Some((nodes, links))
    }
}

#[derive(Clone)]
struct Candidate {
    length: f64,
    names: Vec<String>,
    nodes: Vec<usize>,
    links: Vec<usize>,
    link_names: Vec<String>,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.length
            .total_cmp(&other.length)
            .then_with(|| self.names.cmp(&other.names))
            .then_with(|| self.link_names.cmp(&other.link_names))
    }
}

impl IpGraph {
    fn candidate(&self, nodes: Vec<usize>, links: Vec<usize>) -> Candidate {
        Candidate {
            length: self.path_length(&links),
            names: nodes.iter().map(|&n| self.node_ids[n].clone()).collect(),
            link_names: links.iter().map(|&l| self.link_ids[l].clone()).collect(),
            nodes,
            links,
        }
    }

    pub(crate) fn k_shortest(&self, src: usize, dst: usize, k: usize) -> Vec<IpPath> {
        if k == 0 || src == dst {
            return Vec::new();
        }
        let n = self.node_ids.len();
        let Some((nodes, links)) = self.dijkstra(src, dst, &vec![false; n], &HashSet::new()) else {
            return Vec::new();
        };
        let mut accepted = vec![self.candidate(nodes, links)];
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        seen.insert(accepted[0].links.clone());
        let mut pool: BTreeSet<Candidate> = BTreeSet::new();

        loop {
            let last = accepted.last().expect("non-empty").clone();
            for i in 0..last.links.len() {
                let spur = last.nodes[i];
                let root_nodes = &last.nodes[..=i];
                let root_links = &last.links[..i];
                let mut banned_links = HashSet::new();
                for p in &accepted {
                    if p.links.len() > i && &p.nodes[..=i] == root_nodes && &p.links[..i] == root_links {
                        banned_links.insert(p.links[i]);
                    }
                }
                let mut banned_nodes = vec![false; n];
                for &r in &root_nodes[..i] {
                    banned_nodes[r] = true;
                }
                if let Some((spur_nodes, spur_links)) = self.dijkstra(spur, dst, &banned_nodes, &banned_links) {
                    let mut nodes = root_nodes.to_vec();
                    nodes.extend_from_slice(&spur_nodes[1..]);
                    let mut links = root_links.to_vec();
                    links.extend(spur_links);
                    if seen.insert(links.clone()) {
                        pool.insert(self.candidate(nodes, links));
                    }
                }
            }
            // Keep draining candidates tied with the k-th length so the final
            // lexicographic tie-break sees every equal-length path.
            if accepted.len() >= k {
                let kth = {
                    let mut lens: Vec<f64> = accepted.iter().map(|c| c.length).collect();
                    lens.sort_by(f64::total_cmp);
                    lens[k - 1]
                };
                if pool.first().is_none_or(|c| c.length > kth) {
                    break;
                }
            }
            match pool.pop_first() {
                Some(c) => accepted.push(c),
                None => break,
            }
        }

        accepted.sort();
        accepted.truncate(k);
        accepted.into_iter().map(|c| self.to_path(&c.nodes, &c.links)).collect()
    }

    /// Every simple path from `src` to `dst`, sorted by [`IpPath::rank_cmp`].
    pub(crate) fn all_simple_paths(&self, src: usize, dst: usize) -> Vec<IpPath> {
        fn walk(
            g: &IpGraph,
            at: usize,
            dst: usize,
            on_path: &mut [bool],
            nodes: &mut Vec<usize>,
            links: &mut Vec<usize>,
            out: &mut Vec<IpPath>,
        ) {
            if at == dst {
                out.push(g.to_path(nodes, links));
                return;
            }
            for e in &g.adjacency[at] {
                if on_path[e.to] {
                    continue;
                }
                on_path[e.to] = true;
                nodes.push(e.to);
                links.push(e.link);
                walk(g, e.to, dst, on_path, nodes, links, out);
                links.pop();
                nodes.pop();
                on_path[e.to] = false;
            }
        }
        let mut out = Vec::new();
        if src == dst {
            return out;
        }
        let mut on_path = vec![false; self.node_ids.len()];
        on_path[src] = true;
        walk(self, src, dst, &mut on_path, &mut vec![src], &mut Vec::new(), &mut out);
        out.sort_by(IpPath::rank_cmp);
        out
    }
}

/// Up to `k` loopless IP-layer paths from `src` to `dst`, shortest first.
/// Disconnected or unknown endpoints yield an empty list.
pub fn k_shortest_paths(t: &Topology, src: &str, dst: &str, k: usize) -> Vec<IpPath> {
    let g = IpGraph::new(t);
    match (g.node_index(src), g.node_index(dst)) {
        (Some(s), Some(d)) => g.k_shortest(s, d, k),
        _ => Vec::new(),
    }
}

/// Every simple IP-layer path between two nodes, ranked.
pub fn all_simple_paths(t: &Topology, src: &str, dst: &str) -> Vec<IpPath> {
    let g = IpGraph::new(t);
    match (g.node_index(src), g.node_index(dst)) {
        (Some(s), Some(d)) => g.all_simple_paths(s, d),
        _ => Vec::new(),
    }
}
