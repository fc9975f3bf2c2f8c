//! Network graph, shortest paths between the nodes an instance cares about,
//! path bottlenecks and residual-capacity bookkeeping.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::model::Resources;

/// Dense node index. Ordering follows declaration order in the instance and
/// is the order used for every "smallest node id" tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeIdx(pub usize);

/// Dense link index into [`EdgeNetwork::links`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkIdx(pub usize);

/// Relative tolerance used for comparing accumulated path costs.
const COST_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("network is disconnected: {from} cannot reach {to}")]
    Disconnected { from: String, to: String },
    #[error("node {0:?} is not part of the network")]
    UnknownNode(usize),
    #[error("no link between {0} and {1}")]
    InvalidPath(String, String),
    #[error("flow of {rate} Mbps exceeds residual {available} Mbps")]
    CapacityExceeded { rate: f64, available: f64 },
    #[error("flow rate must be finite and non-negative, got {0}")]
    InvalidRate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub u: NodeIdx,
    pub v: NodeIdx,
    pub cost: f64,
    pub capacity: f64,
}

/// Undirected weighted network with the hosting candidates, gateway and the
/// user's current attachment point.
#[derive(Debug, Clone)]
pub struct EdgeNetwork {
    names: Vec<String>,
    index: HashMap<String, NodeIdx>,
    links: Vec<Link>,
    // neighbour lists sorted by neighbour index
    adjacency: Vec<Vec<(NodeIdx, LinkIdx)>>,
    pair_link: HashMap<(NodeIdx, NodeIdx), LinkIdx>,
    candidates: Vec<NodeIdx>,
    gateway: NodeIdx,
    attachment: NodeIdx,
    node_throughput: Vec<f64>,
}

impl EdgeNetwork {
    /// Builds the network from already-validated parts. Node names must be
    /// unique and every index in range; [`crate::model::validate_instance`]
    /// is where user input gets checked.
    pub fn new(
        names: Vec<String>,
        links: Vec<Link>,
        mut candidates: Vec<NodeIdx>,
        gateway: NodeIdx,
        attachment: NodeIdx,
        node_throughput: Vec<f64>,
    ) -> Self {
        let n = names.len();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, name)| (name.clone(), NodeIdx(i)))
            .collect();
        let mut adjacency = vec![Vec::new(); n];
        let mut pair_link = HashMap::with_capacity(links.len() * 2);
        for (li, link) in links.iter().enumerate() {
            adjacency[link.u.0].push((link.v, LinkIdx(li)));
            adjacency[link.v.0].push((link.u, LinkIdx(li)));
            pair_link.insert((link.u, link.v), LinkIdx(li));
            pair_link.insert((link.v, link.u), LinkIdx(li));
        }
        for adj in &mut adjacency {
            adj.sort();
        }
        candidates.sort();
        candidates.dedup();
        let node_throughput = if node_throughput.len() == n {
            node_throughput
        } else {
            vec![f64::INFINITY; n]
        };
        Self {
            names,
            index,
            links,
            adjacency,
            pair_link,
            candidates,
            gateway,
            attachment,
            node_throughput,
        }
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeIdx> {
        (0..self.names.len()).map(NodeIdx)
    }

    pub fn name(&self, node: NodeIdx) -> &str {
        &self.names[node.0]
    }

    pub fn lookup(&self, name: &str) -> Option<NodeIdx> {
        self.index.get(name).copied()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, idx: LinkIdx) -> &Link {
        &self.links[idx.0]
    }

    pub fn link_between(&self, a: NodeIdx, b: NodeIdx) -> Option<LinkIdx> {
        self.pair_link.get(&(a, b)).copied()
    }

    pub fn neighbors(&self, node: NodeIdx) -> &[(NodeIdx, LinkIdx)] {
        &self.adjacency[node.0]
    }

    pub fn degree(&self, node: NodeIdx) -> usize {
        self.adjacency[node.0].len()
    }

    /// Hosting candidates K, ascending by node index.
    pub fn candidates(&self) -> &[NodeIdx] {
        &self.candidates
    }

    pub fn is_candidate(&self, node: NodeIdx) -> bool {
        self.candidates.binary_search(&node).is_ok()
    }

    pub fn gateway(&self) -> NodeIdx {
        self.gateway
    }

    pub fn attachment(&self) -> NodeIdx {
        self.attachment
    }

    /// Flow a node tolerates on a node-local hop (k = m). Infinite unless
    /// configured.
    pub fn node_throughput(&self, node: NodeIdx) -> f64 {
        self.node_throughput[node.0]
    }

    pub fn is_connected(&self) -> bool {
        if self.names.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.names.len()];
        let mut stack = vec![NodeIdx(0)];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &(w, _) in self.neighbors(n) {
                if !seen[w.0] {
                    seen[w.0] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Single-source Dijkstra over the whole graph.
    pub fn distances_from(&self, source: NodeIdx) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Entry(f64, NodeIdx);
        impl Eq for Entry {}
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> Ordering {
                other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
            }
        }

        let mut dist = vec![f64::INFINITY; self.names.len()];
        dist[source.0] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry(0.0, source));
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u.0] {
                continue;
            }
            for &(w, l) in self.neighbors(u) {
                let nd = d + self.links[l.0].cost;
                if nd < dist[w.0] {
                    dist[w.0] = nd;
                    heap.push(Entry(nd, w));
                }
            }
        }
        dist
    }
}

/// One stored shortest path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEntry {
    pub cost: f64,
    pub nodes: Vec<NodeIdx>,
    pub links: Vec<LinkIdx>,
    /// Minimum initial link capacity along the path; infinite for a
    /// zero-length path unless the node has a configured throughput.
    pub bottleneck: f64,
}

/// Shortest paths between every ordered pair of a relevant node set.
#[derive(Debug, Clone)]
pub struct PathTable {
    relevant: Vec<NodeIdx>,
    slot: Vec<Option<usize>>,
    entries: Vec<PathEntry>,
}

impl PathTable {
    pub fn relevant(&self) -> &[NodeIdx] {
        &self.relevant
    }

    pub fn contains(&self, node: NodeIdx) -> bool {
        self.slot.get(node.0).copied().flatten().is_some()
    }

    fn position(&self, a: NodeIdx, b: NodeIdx) -> usize {
        let ia = self.slot[a.0].expect("node outside the path table");
        let ib = self.slot[b.0].expect("node outside the path table");
        ia * self.relevant.len() + ib
    }

    /// Panics if either node is outside the relevant set.
    pub fn entry(&self, a: NodeIdx, b: NodeIdx) -> &PathEntry {
        &self.entries[self.position(a, b)]
    }

    pub fn try_entry(&self, a: NodeIdx, b: NodeIdx) -> Option<&PathEntry> {
        let ia = self.slot.get(a.0).copied().flatten()?;
        let ib = self.slot.get(b.0).copied().flatten()?;
        Some(&self.entries[ia * self.relevant.len() + ib])
    }

    pub fn cost(&self, a: NodeIdx, b: NodeIdx) -> f64 {
        self.entry(a, b).cost
    }

    pub fn nodes(&self, a: NodeIdx, b: NodeIdx) -> &[NodeIdx] {
        &self.entry(a, b).nodes
    }

    pub fn bottleneck(&self, a: NodeIdx, b: NodeIdx) -> f64 {
        self.entry(a, b).bottleneck
    }

    pub fn max_cost(&self) -> f64 {
        self.entries.iter().map(|e| e.cost).fold(0.0, f64::max)
    }
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= COST_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Shortest paths for every ordered pair in `relevant`. Among equal-cost
/// paths the lexicographically smallest node sequence wins.
pub fn shortest_paths(network: &EdgeNetwork, relevant: &[NodeIdx]) -> Result<PathTable, GraphError> {
    let n = network.node_count();
    let mut rel: Vec<NodeIdx> = relevant.to_vec();
    rel.sort();
    rel.dedup();
    if let Some(bad) = rel.iter().find(|v| v.0 >= n) {
        return Err(GraphError::UnknownNode(bad.0));
    }
    let mut slot = vec![None; n];
    for (i, v) in rel.iter().enumerate() {
        slot[v.0] = Some(i);
    }
    let dists: Vec<Vec<f64>> = rel.iter().map(|&v| network.distances_from(v)).collect();

    let m = rel.len();
    let mut entries = Vec::with_capacity(m * m);
    for (ia, &a) in rel.iter().enumerate() {
        for (ib, &b) in rel.iter().enumerate() {
            let total = dists[ia][b.0];
            if !total.is_finite() {
                return Err(GraphError::Disconnected {
                    from: network.name(a).to_string(),
                    to: network.name(b).to_string(),
                });
            }
            let to_b = &dists[ib];
            let mut nodes = vec![a];
            let mut links = Vec::new();
            let mut acc = 0.0;
            let mut cur = a;
            while cur != b {
                let (next, link) = network
                    .neighbors(cur)
                    .iter()
                    .copied()
                    .find(|&(w, l)| approx_eq(acc + network.link(l).cost + to_b[w.0], total))
                    .expect("a shortest-path successor always exists");
                acc += network.link(link).cost;
                nodes.push(next);
                links.push(link);
                cur = next;
            }
            let bottleneck = if links.is_empty() {
                network.node_throughput(a)
            } else {
                links
                    .iter()
                    .map(|l| network.link(*l).capacity)
                    .fold(f64::INFINITY, f64::min)
            };
            entries.push(PathEntry {
                cost: total,
                nodes,
                links,
                bottleneck,
            });
        }
    }
    // float sums along opposite directions can differ in the last ulp
    for ia in 0..m {
        for ib in (ia + 1)..m {
            let c = entries[ia * m + ib].cost;
            entries[ib * m + ia].cost = c;
        }
    }
    Ok(PathTable {
        relevant: rel,
        slot,
        entries,
    })
}

/// Remaining per-link capacity, per-node flow tolerance and per-node
/// hosting resources.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualState {
    pub links: Vec<f64>,
    pub node_flow: Vec<f64>,
    pub resources: Vec<Resources>,
}

impl ResidualState {
    /// Full link capacities; node resources for the given nodes, zero elsewhere.
    pub fn new(network: &EdgeNetwork, resources: Vec<Resources>) -> Self {
        Self {
            links: network.links().iter().map(|l| l.capacity).collect(),
            node_flow: (0..network.node_count())
                .map(|i| network.node_throughput(NodeIdx(i)))
                .collect(),
            resources,
        }
    }
}

fn walk_links(network: &EdgeNetwork, path: &[NodeIdx]) -> Result<Vec<LinkIdx>, GraphError> {
    path.windows(2)
        .map(|w| {
            network.link_between(w[0], w[1]).ok_or_else(|| {
                let name = |v: NodeIdx| {
                    if v.0 < network.node_count() {
                        network.name(v).to_string()
                    } else {
                        format!("#{}", v.0)
                    }
                };
                GraphError::InvalidPath(name(w[0]), name(w[1]))
            })
        })
        .collect()
}

/// Minimum residual capacity over the links of `path`. A single-node path
/// yields that node's residual flow tolerance (infinite by default).
pub fn path_bottleneck(network: &EdgeNetwork, path: &[NodeIdx], residual: &ResidualState) -> Result<f64, GraphError> {
    match path {
        [] => Ok(f64::INFINITY),
        [only] => residual
            .node_flow
            .get(only.0)
            .copied()
            .ok_or(GraphError::UnknownNode(only.0)),
        _ => Ok(walk_links(network, path)?
            .into_iter()
            .map(|l| residual.links[l.0])
            .fold(f64::INFINITY, f64::min)),
    }
}

/// Per-link demand of sending `rate` along each traversal of `path`.
fn demand(network: &EdgeNetwork, path: &[NodeIdx], rate: f64) -> Result<Vec<(LinkIdx, f64)>, GraphError> {
    let mut out: Vec<(LinkIdx, f64)> = Vec::new();
    for l in walk_links(network, path)? {
        match out.iter_mut().find(|(x, _)| *x == l) {
            Some((_, d)) => *d += rate,
            None => out.push((l, rate)),
        }
    }
    Ok(out)
}

/// Charges `rate` to every link of `path`, once per traversal. Nothing is
/// modified when some link lacks the capacity.
pub fn consume_flow(
    network: &EdgeNetwork,
    residual: &mut ResidualState,
    path: &[NodeIdx],
    rate: f64,
) -> Result<(), GraphError> {
    if !rate.is_finite() || rate < 0.0 {
        return Err(GraphError::InvalidRate(rate));
    }
    if let [only] = path {
        let avail = *residual.node_flow.get(only.0).ok_or(GraphError::UnknownNode(only.0))?;
        if rate > avail {
            return Err(GraphError::CapacityExceeded { rate, available: avail });
        }
        residual.node_flow[only.0] -= rate;
        return Ok(());
    }
    let need = demand(network, path, rate)?;
    for &(l, d) in &need {
        if d > residual.links[l.0] {
            return Err(GraphError::CapacityExceeded {
                rate: d,
                available: residual.links[l.0],
            });
        }
    }
    for (l, d) in need {
        residual.links[l.0] -= d;
    }
    Ok(())
}

/// Inverse of [`consume_flow`].
pub fn release_flow(
    network: &EdgeNetwork,
    residual: &mut ResidualState,
    path: &[NodeIdx],
    rate: f64,
) -> Result<(), GraphError> {
    if !rate.is_finite() || rate < 0.0 {
        return Err(GraphError::InvalidRate(rate));
    }
    if let [only] = path {
        let slot = residual.node_flow.get_mut(only.0).ok_or(GraphError::UnknownNode(only.0))?;
        *slot += rate;
        return Ok(());
    }
    for (l, d) in demand(network, path, rate)? {
        residual.links[l.0] += d;
    }
    Ok(())
}
