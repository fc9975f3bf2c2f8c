//! Problem data: NF catalog, node resources, service requests, mobility and
//! the placement decision, together with validation and the JSON formats.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{shortest_paths, EdgeNetwork, GraphError, Link, NodeIdx, PathTable};

/// Tolerance on probability mass.
pub const MASS_TOL: f64 = 1e-9;

/// Two-dimensional hosting resource vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resources {
    pub memory_mb: f64,
    pub cpu_cores: f64,
}

impl Resources {
    pub const ZERO: Resources = Resources { memory_mb: 0.0, cpu_cores: 0.0 };

    pub fn new(memory_mb: f64, cpu_cores: f64) -> Self {
        Self { memory_mb, cpu_cores }
    }

    pub fn fits_within(&self, available: &Resources) -> bool {
        self.memory_mb <= available.memory_mb && self.cpu_cores <= available.cpu_cores
    }

    pub fn is_positive(&self) -> bool {
        self.memory_mb > 0.0 && self.cpu_cores > 0.0 && self.memory_mb.is_finite() && self.cpu_cores.is_finite()
    }
}

impl std::ops::Add for Resources {
    type Output = Resources;
    fn add(self, o: Resources) -> Resources {
        Resources::new(self.memory_mb + o.memory_mb, self.cpu_cores + o.cpu_cores)
    }
}

impl std::ops::Sub for Resources {
    type Output = Resources;
    fn sub(self, o: Resources) -> Resources {
        Resources::new(self.memory_mb - o.memory_mb, self.cpu_cores - o.cpu_cores)
    }
}

impl std::ops::AddAssign for Resources {
    fn add_assign(&mut self, o: Resources) {
        *self = *self + o;
    }
}

impl std::ops::SubAssign for Resources {
    fn sub_assign(&mut self, o: Resources) {
        *self = *self - o;
    }
}

// ---------------------------------------------------------------------------
// JSON documents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkDoc {
    pub u: String,
    pub v: String,
    pub cost: f64,
    pub capacity_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDoc {
    pub nodes: Vec<String>,
    pub links: Vec<LinkDoc>,
    pub candidates: Vec<String>,
    pub gateway: String,
    pub attachment: String,
    /// Optional node-local flow tolerance; absent nodes are unlimited.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub node_throughput_mbps: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestDoc {
    pub id: String,
    pub chain: Vec<String>,
    pub flow_rate_mbps: f64,
    pub heads: Vec<String>,
    /// Optional per-head weight on routing terms; defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_weights: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityDoc {
    pub destinations: BTreeMap<String, f64>,
    pub stay_probability: f64,
}

/// Serialized form of a [`ProblemInstance`]. Field order is the canonical
/// output order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub network: NetworkDoc,
    pub catalog: BTreeMap<String, Resources>,
    pub node_resources: BTreeMap<String, Resources>,
    pub requests: Vec<RequestDoc>,
    pub placement_cost: BTreeMap<String, BTreeMap<String, f64>>,
    pub mobility: MobilityDoc,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid instance: {}", summarize(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("chain position {position} out of range 1..={len}")]
    Position { position: usize, len: usize },
    #[error("placement references unknown {kind} {value:?}")]
    UnknownReference { kind: &'static str, value: String },
}

fn summarize(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Parses JSON into `T`, reporting failures with a `$.a.b[3]` style path.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, ModelError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let segs = err.path().to_string();
        let mut path = if segs == "." { "$".to_string() } else { format!("$.{segs}") };
        let message = err.inner().to_string();
        if let Some(rest) = message.strip_prefix("missing field `") {
            if let Some(field) = rest.split('`').next() {
                path = format!("{path}.{field}");
            }
        }
        ModelError::Parse { path, message }
    })
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ViolationCode {
    EmptyNetwork,
    DuplicateNode,
    InvalidIdentifier,
    UnknownNode,
    SelfLoop,
    DuplicateLink,
    NonPositiveCost,
    NonPositiveCapacity,
    Disconnected,
    EmptyCandidates,
    InvalidThroughput,
    NonPositiveDemand,
    MissingResources,
    ResourcesNotCandidate,
    NonPositiveResources,
    EmptyBatch,
    DuplicateRequest,
    EmptyChain,
    #[serde(rename = "UnknownNF")]
    UnknownNf,
    RepeatedNfInChain,
    NonPositiveFlowRate,
    EmptyHeads,
    DuplicateHead,
    InvalidHeadWeight,
    ProbabilityOutOfRange,
    MobilityMassExceeded,
    MobilityMassDeficit,
    EmptyDestinations,
    InvalidPlacementCost,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {}: {}", self.code, self.path, self.message)
    }
}

/// Identifiers end up inside LP variable names, so they are restricted to
/// ASCII alphanumerics.
pub fn is_valid_identifier(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric())
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, code: ViolationCode, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            code,
            path: path.into(),
            message: message.into(),
        });
    }
}

/// Checks every structural invariant of an instance. An empty result means
/// [`ProblemInstance::new`] will accept it.
pub fn validate_instance(doc: &InstanceDoc) -> Vec<Violation> {
    use ViolationCode::*;
    let mut out = Collector(Vec::new());
    let net = &doc.network;

    if net.nodes.is_empty() {
        out.push(EmptyNetwork, "$.network.nodes", "network has no nodes");
    }
    let mut node_set: HashMap<&str, usize> = HashMap::new();
    for (i, n) in net.nodes.iter().enumerate() {
        if !is_valid_identifier(n) {
            out.push(InvalidIdentifier, format!("$.network.nodes[{i}]"), format!("node id {n:?} must be ASCII alphanumeric"));
        }
        if node_set.insert(n.as_str(), i).is_some() {
            out.push(DuplicateNode, format!("$.network.nodes[{i}]"), format!("node {n:?} declared twice"));
        }
    }
    let known = |n: &str| node_set.contains_key(n);

    let mut seen_pairs = HashSet::new();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); net.nodes.len()];
    for (i, l) in net.links.iter().enumerate() {
        let p = format!("$.network.links[{i}]");
        let mut endpoints_ok = true;
        for end in [&l.u, &l.v] {
            if !known(end) {
                out.push(UnknownNode, p.clone(), format!("link endpoint {end:?} is not a node"));
                endpoints_ok = false;
            }
        }
        if l.u == l.v {
            out.push(SelfLoop, p.clone(), format!("self-loop on {:?}", l.u));
        } else if endpoints_ok {
            let key = if l.u < l.v { (&l.u, &l.v) } else { (&l.v, &l.u) };
            if !seen_pairs.insert(key) {
                out.push(DuplicateLink, p.clone(), format!("second link between {:?} and {:?}", l.u, l.v));
            } else {
                let (a, b) = (node_set[l.u.as_str()], node_set[l.v.as_str()]);
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        if !(l.cost > 0.0 && l.cost.is_finite()) {
            out.push(NonPositiveCost, format!("{p}.cost"), format!("routing cost {} must be positive", l.cost));
        }
        if !(l.capacity_mbps > 0.0 && l.capacity_mbps.is_finite()) {
            out.push(NonPositiveCapacity, format!("{p}.capacity_mbps"), format!("capacity {} must be positive", l.capacity_mbps));
        }
    }
    if !net.nodes.is_empty() {
        let mut seen = vec![false; net.nodes.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &w in &adjacency[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            out.push(Disconnected, "$.network.links", format!("node {:?} is unreachable from {:?}", net.nodes[i], net.nodes[0]));
        }
    }

    if net.candidates.is_empty() {
        out.push(EmptyCandidates, "$.network.candidates", "no hosting candidates");
    }
    let mut cand_set = HashSet::new();
    for (i, c) in net.candidates.iter().enumerate() {
        if !known(c) {
            out.push(UnknownNode, format!("$.network.candidates[{i}]"), format!("candidate {c:?} is not a node"));
        }
        cand_set.insert(c.as_str());
    }
    for (field, n) in [("gateway", &net.gateway), ("attachment", &net.attachment)] {
        if !known(n) {
            out.push(UnknownNode, format!("$.network.{field}"), format!("{field} {n:?} is not a node"));
        }
    }
    for (n, t) in &net.node_throughput_mbps {
        let p = format!("$.network.node_throughput_mbps.{n}");
        if !known(n) {
            out.push(UnknownNode, p.clone(), format!("{n:?} is not a node"));
        }
        if !(*t > 0.0) || t.is_nan() {
            out.push(InvalidThroughput, p, format!("throughput {t} must be positive"));
        }
    }

    for (id, demand) in &doc.catalog {
        if !is_valid_identifier(id) {
            out.push(InvalidIdentifier, format!("$.catalog.{id}"), format!("NF id {id:?} must be ASCII alphanumeric"));
        }
        if !demand.is_positive() {
            out.push(NonPositiveDemand, format!("$.catalog.{id}"), "NF demands must be strictly positive");
        }
    }

    for c in &net.candidates {
        if known(c) && !doc.node_resources.contains_key(c) {
            out.push(MissingResources, "$.node_resources", format!("candidate {c:?} has no resources"));
        }
    }
    for (n, r) in &doc.node_resources {
        let p = format!("$.node_resources.{n}");
        if !cand_set.contains(n.as_str()) {
            out.push(ResourcesNotCandidate, p.clone(), format!("{n:?} is not a hosting candidate"));
        }
        if !r.is_positive() {
            out.push(NonPositiveResources, p, "node resources must be strictly positive");
        }
    }

    if doc.requests.is_empty() {
        out.push(EmptyBatch, "$.requests", "request batch is empty");
    }
    let mut request_ids = HashSet::new();
    for (ri, r) in doc.requests.iter().enumerate() {
        let p = format!("$.requests[{ri}]");
        if !is_valid_identifier(&r.id) {
            out.push(InvalidIdentifier, format!("{p}.id"), format!("request id {:?} must be ASCII alphanumeric", r.id));
        }
        if !request_ids.insert(r.id.as_str()) {
            out.push(DuplicateRequest, format!("{p}.id"), format!("request id {:?} repeated", r.id));
        }
        if r.chain.is_empty() {
            out.push(EmptyChain, format!("{p}.chain"), "chain must hold at least one NF");
        }
        let mut in_chain = HashSet::new();
        for (li, f) in r.chain.iter().enumerate() {
            if !doc.catalog.contains_key(f) {
                out.push(UnknownNf, format!("{p}.chain[{li}]"), format!("NF {f:?} is not in the catalog"));
            }
            if !in_chain.insert(f.as_str()) {
                out.push(RepeatedNfInChain, format!("{p}.chain[{li}]"), format!("NF {f:?} appears twice"));
            }
        }
        if !(r.flow_rate_mbps > 0.0 && r.flow_rate_mbps.is_finite()) {
            out.push(NonPositiveFlowRate, format!("{p}.flow_rate_mbps"), format!("flow rate {} must be positive", r.flow_rate_mbps));
        }
        if r.heads.is_empty() {
            out.push(EmptyHeads, format!("{p}.heads"), "at least one cache head is required");
        }
        let mut heads = HashSet::new();
        for (hi, h) in r.heads.iter().enumerate() {
            if !known(h) {
                out.push(UnknownNode, format!("{p}.heads[{hi}]"), format!("head {h:?} is not a node"));
            }
            if !heads.insert(h.as_str()) {
                out.push(DuplicateHead, format!("{p}.heads[{hi}]"), format!("head {h:?} repeated"));
            }
        }
        if let Some(w) = &r.head_weights {
            for (h, wt) in w {
                if !heads.contains(h.as_str()) || !(*wt >= 0.0 && wt.is_finite()) {
                    out.push(InvalidHeadWeight, format!("{p}.head_weights.{h}"), format!("weight {wt} for {h:?} must be a finite non-negative value on a declared head"));
                }
            }
        }
    }

    for (f, per_node) in &doc.placement_cost {
        if !doc.catalog.contains_key(f) {
            out.push(UnknownNf, format!("$.placement_cost.{f}"), format!("NF {f:?} is not in the catalog"));
        }
        for (n, c) in per_node {
            let p = format!("$.placement_cost.{f}.{n}");
            if !known(n) {
                out.push(UnknownNode, p.clone(), format!("{n:?} is not a node"));
            }
            if !(*c >= 0.0 && c.is_finite()) {
                out.push(InvalidPlacementCost, p, format!("placement cost {c} must be finite and non-negative"));
            }
        }
    }

    let mob = &doc.mobility;
    let mut mass = 0.0;
    let mut probs_ok = true;
    for (d, rho) in &mob.destinations {
        let p = format!("$.mobility.destinations.{d}");
        if !known(d) {
            out.push(UnknownNode, p.clone(), format!("destination {d:?} is not a node"));
        }
        if !(0.0..=1.0).contains(rho) {
            out.push(ProbabilityOutOfRange, p, format!("probability {rho} outside [0, 1]"));
            probs_ok = false;
        }
        mass += rho;
    }
    if !(0.0..=1.0).contains(&mob.stay_probability) {
        out.push(ProbabilityOutOfRange, "$.mobility.stay_probability", format!("probability {} outside [0, 1]", mob.stay_probability));
        probs_ok = false;
    }
    mass += mob.stay_probability;
    if probs_ok || mass.is_finite() {
        if mass > 1.0 + MASS_TOL {
            out.push(MobilityMassExceeded, "$.mobility", format!("total probability mass {mass} exceeds 1"));
        } else if mass < 1.0 - MASS_TOL {
            out.push(MobilityMassDeficit, "$.mobility", format!("total probability mass {mass} is below 1"));
        }
    }
    if mob.destinations.is_empty() && mob.stay_probability != 1.0 {
        out.push(EmptyDestinations, "$.mobility.destinations", "destinations may only be empty when the stay probability is 1");
    }

    out.0
}

// ---------------------------------------------------------------------------
// Prepared instance
// ---------------------------------------------------------------------------

/// Dense NF index; catalog order (sorted by NF id).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NfIdx(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceRequest {
    pub id: String,
    /// Chain positions 1..=L; the cache head is not part of it.
    pub chain: Vec<NfIdx>,
    pub flow_rate: f64,
    /// Cache heads S_r, ascending node index.
    pub heads: Vec<NodeIdx>,
    /// Routing weight per head, parallel to `heads`.
    pub head_weights: Vec<f64>,
}

impl ServiceRequest {
    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }

    pub fn position_of(&self, nf: NfIdx) -> Option<usize> {
        self.chain.iter().position(|&f| f == nf)
    }

    pub fn head_weight(&self, head: NodeIdx) -> Option<f64> {
        self.heads.iter().position(|&h| h == head).map(|i| self.head_weights[i])
    }
}

/// V_ril: 1 iff the `position`-th (1-based) NF of `request` is `nf`.
pub fn v_entry(request: &ServiceRequest, nf: NfIdx, position: usize) -> Result<u8, ModelError> {
    if position == 0 || position > request.chain.len() {
        return Err(ModelError::Position {
            position,
            len: request.chain.len(),
        });
    }
    Ok(u8::from(request.chain[position - 1] == nf))
}

/// A node the user may end up attached to, with its probability weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub node: NodeIdx,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityProfile {
    pub destinations: Vec<Target>,
    pub stay_probability: f64,
}

/// Validated, indexed problem instance. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    doc: InstanceDoc,
    network: EdgeNetwork,
    nf_names: Vec<String>,
    nf_index: HashMap<String, NfIdx>,
    demands: Vec<Resources>,
    capacity: Vec<Resources>,
    requests: Vec<ServiceRequest>,
    placement_cost: Vec<Vec<f64>>,
    mobility: MobilityProfile,
    targets: Vec<Target>,
}

impl ProblemInstance {
    pub fn new(doc: InstanceDoc) -> Result<Self, ModelError> {
        let violations = validate_instance(&doc);
        if !violations.is_empty() {
            return Err(ModelError::Invalid(violations));
        }
        let net = &doc.network;
        let names = net.nodes.clone();
        let idx: HashMap<&str, NodeIdx> = names.iter().enumerate().map(|(i, n)| (n.as_str(), NodeIdx(i))).collect();
        let links = net
            .links
            .iter()
            .map(|l| Link {
                u: idx[l.u.as_str()],
                v: idx[l.v.as_str()],
                cost: l.cost,
                capacity: l.capacity_mbps,
            })
            .collect();
        let mut throughput = vec![f64::INFINITY; names.len()];
        for (n, t) in &net.node_throughput_mbps {
            throughput[idx[n.as_str()].0] = *t;
        }
        let network = EdgeNetwork::new(
            names.clone(),
            links,
            net.candidates.iter().map(|c| idx[c.as_str()]).collect(),
            idx[net.gateway.as_str()],
            idx[net.attachment.as_str()],
            throughput,
        );

        let nf_names: Vec<String> = doc.catalog.keys().cloned().collect();
        let nf_index: HashMap<String, NfIdx> = nf_names.iter().enumerate().map(|(i, n)| (n.clone(), NfIdx(i))).collect();
        let demands = doc.catalog.values().copied().collect();

        let mut capacity = vec![Resources::ZERO; names.len()];
        for (n, r) in &doc.node_resources {
            capacity[idx[n.as_str()].0] = *r;
        }

        let requests = doc
            .requests
            .iter()
            .map(|r| {
                let mut heads: Vec<NodeIdx> = r.heads.iter().map(|h| idx[h.as_str()]).collect();
                heads.sort();
                let head_weights = heads
                    .iter()
                    .map(|h| {
                        r.head_weights
                            .as_ref()
                            .and_then(|w| w.get(&names[h.0]).copied())
                            .unwrap_or(1.0)
                    })
                    .collect();
                ServiceRequest {
                    id: r.id.clone(),
                    chain: r.chain.iter().map(|f| nf_index[f]).collect(),
                    flow_rate: r.flow_rate_mbps,
                    heads,
                    head_weights,
                }
            })
            .collect();

        let mut placement_cost = vec![vec![0.0; names.len()]; nf_names.len()];
        for (f, per_node) in &doc.placement_cost {
            for (n, c) in per_node {
                placement_cost[nf_index[f].0][idx[n.as_str()].0] = *c;
            }
        }

        let mut destinations: Vec<Target> = doc
            .mobility
            .destinations
            .iter()
            .map(|(d, w)| Target {
                node: idx[d.as_str()],
                weight: *w,
            })
            .collect();
        destinations.sort_by_key(|t| t.node);
        let mobility = MobilityProfile {
            destinations,
            stay_probability: doc.mobility.stay_probability,
        };
        // the no-handover case is an implicit destination at the attachment
        let mut merged: BTreeMap<NodeIdx, f64> = BTreeMap::new();
        for t in &mobility.destinations {
            *merged.entry(t.node).or_default() += t.weight;
        }
        *merged.entry(network.attachment()).or_default() += mobility.stay_probability;
        let targets = merged.into_iter().map(|(node, weight)| Target { node, weight }).collect();

        Ok(Self {
            doc,
            network,
            nf_names,
            nf_index,
            demands,
            capacity,
            requests,
            placement_cost,
            mobility,
            targets,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Self::new(parse_json(text)?)
    }

    /// Canonical JSON: fixed field order, maps sorted by key, pretty printed.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("instance documents always serialize")
    }

    pub fn doc(&self) -> &InstanceDoc {
        &self.doc
    }

    pub fn network(&self) -> &EdgeNetwork {
        &self.network
    }

    pub fn requests(&self) -> &[ServiceRequest] {
        &self.requests
    }

    pub fn request(&self, r: usize) -> &ServiceRequest {
        &self.requests[r]
    }

    pub fn nf_count(&self) -> usize {
        self.nf_names.len()
    }

    pub fn nf_name(&self, nf: NfIdx) -> &str {
        &self.nf_names[nf.0]
    }

    pub fn nf_lookup(&self, name: &str) -> Option<NfIdx> {
        self.nf_index.get(name).copied()
    }

    pub fn demand(&self, nf: NfIdx) -> Resources {
        self.demands[nf.0]
    }

    /// U_k; zero for nodes that are not hosting candidates.
    pub fn capacity(&self, node: NodeIdx) -> Resources {
        self.capacity[node.0]
    }

    pub fn capacities(&self) -> &[Resources] {
        &self.capacity
    }

    /// C_i^k.
    pub fn placement_cost(&self, nf: NfIdx, node: NodeIdx) -> f64 {
        self.placement_cost[nf.0][node.0]
    }

    pub fn mobility(&self) -> &MobilityProfile {
        &self.mobility
    }

    /// Evaluation destinations D ∪ {o}, ascending node index, with the stay
    /// probability carried by the attachment node.
    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    pub fn target_weight(&self, node: NodeIdx) -> Option<f64> {
        self.targets.iter().find(|t| t.node == node).map(|t| t.weight)
    }

    /// Every node whose pairwise paths the algorithms look up.
    pub fn relevant_nodes(&self) -> Vec<NodeIdx> {
        let mut nodes: BTreeSet<NodeIdx> = self.network.candidates().iter().copied().collect();
        nodes.insert(self.network.gateway());
        nodes.insert(self.network.attachment());
        nodes.extend(self.targets.iter().map(|t| t.node));
        for r in &self.requests {
            nodes.extend(r.heads.iter().copied());
        }
        nodes.into_iter().collect()
    }

    pub fn path_table(&self) -> Result<PathTable, GraphError> {
        shortest_paths(&self.network, &self.relevant_nodes())
    }

    pub fn max_chain_len(&self) -> usize {
        self.requests.iter().map(|r| r.chain.len()).max().unwrap_or(0)
    }
}

// ---------------------------------------------------------------------------
// Placement
// ---------------------------------------------------------------------------

/// x_ri^k = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct XVar {
    pub request: usize,
    pub nf: NfIdx,
    pub node: NodeIdx,
}

/// y_ri^ksd = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YVar {
    pub request: usize,
    pub nf: NfIdx,
    pub node: NodeIdx,
    pub head: NodeIdx,
    pub dest: NodeIdx,
}

/// z_rij^kmsd = 1, only for NFs at consecutive chain positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ZVar {
    pub request: usize,
    pub first: NfIdx,
    pub second: NfIdx,
    pub first_node: NodeIdx,
    pub second_node: NodeIdx,
    pub head: NodeIdx,
    pub dest: NodeIdx,
}

/// Assignment x and visit plan y. z is derived from y unless a loaded file
/// carried explicit values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Placement {
    pub x: BTreeSet<XVar>,
    pub y: BTreeSet<YVar>,
    pub z: Option<BTreeSet<ZVar>>,
}

impl Placement {
    /// Builds x as the union of visited nodes from a per-slot host choice
    /// `host(r, position, head, dest)` (position 0-based). Slots where the
    /// closure returns `None` stay unvisited.
    pub fn from_plan<F>(instance: &ProblemInstance, mut host: F) -> Self
    where
        F: FnMut(usize, usize, NodeIdx, NodeIdx) -> Option<NodeIdx>,
    {
        let mut p = Placement::default();
        for (r, req) in instance.requests().iter().enumerate() {
            for (l, &nf) in req.chain.iter().enumerate() {
                for &s in &req.heads {
                    for t in instance.targets() {
                        if let Some(k) = host(r, l, s, t.node) {
                            p.x.insert(XVar { request: r, nf, node: k });
                            p.y.insert(YVar {
                                request: r,
                                nf,
                                node: k,
                                head: s,
                                dest: t.node,
                            });
                        }
                    }
                }
            }
        }
        p
    }

    /// z values implied by y over consecutive chain positions.
    pub fn derived_z(&self, instance: &ProblemInstance) -> BTreeSet<ZVar> {
        let mut by_slot: HashMap<(usize, NfIdx, NodeIdx, NodeIdx), Vec<NodeIdx>> = HashMap::new();
        for y in &self.y {
            by_slot.entry((y.request, y.nf, y.head, y.dest)).or_default().push(y.node);
        }
        let mut z = BTreeSet::new();
        for ((r, nf, s, d), firsts) in &by_slot {
            let Some(req) = instance.requests().get(*r) else { continue };
            let Some(pos) = req.position_of(*nf) else { continue };
            let Some(&next) = req.chain.get(pos + 1) else { continue };
            if let Some(seconds) = by_slot.get(&(*r, next, *s, *d)) {
                for &k in firsts {
                    for &m in seconds {
                        z.insert(ZVar {
                            request: *r,
                            first: *nf,
                            second: next,
                            first_node: k,
                            second_node: m,
                            head: *s,
                            dest: *d,
                        });
                    }
                }
            }
        }
        z
    }

    pub fn with_explicit_z(mut self, instance: &ProblemInstance) -> Self {
        self.z = Some(self.derived_z(instance));
        self
    }

    pub fn to_doc(&self, instance: &ProblemInstance) -> PlacementDoc {
        let node = |n: NodeIdx| instance.network().name(n).to_string();
        let nf = |f: NfIdx| instance.nf_name(f).to_string();
        let req = |r: usize| instance.request(r).id.clone();
        PlacementDoc {
            x: self.x.iter().map(|v| (req(v.request), nf(v.nf), node(v.node))).collect(),
            y: self
                .y
                .iter()
                .map(|v| (req(v.request), nf(v.nf), node(v.node), node(v.head), node(v.dest)))
                .collect(),
            z: self.z.as_ref().map(|zs| {
                zs.iter()
                    .map(|v| {
                        (
                            req(v.request),
                            nf(v.first),
                            nf(v.second),
                            node(v.first_node),
                            node(v.second_node),
                            node(v.head),
                            node(v.dest),
                        )
                    })
                    .collect()
            }),
        }
    }

    pub fn from_doc(instance: &ProblemInstance, doc: &PlacementDoc) -> Result<Self, ModelError> {
        let ids: HashMap<&str, usize> = instance
            .requests()
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect();
        let req = |s: &str| {
            ids.get(s).copied().ok_or_else(|| ModelError::UnknownReference {
                kind: "request",
                value: s.to_string(),
            })
        };
        let nf = |s: &str| {
            instance.nf_lookup(s).ok_or_else(|| ModelError::UnknownReference {
                kind: "NF",
                value: s.to_string(),
            })
        };
        let node = |s: &str| {
            instance.network().lookup(s).ok_or_else(|| ModelError::UnknownReference {
                kind: "node",
                value: s.to_string(),
            })
        };
        let mut p = Placement::default();
        for (r, i, k) in &doc.x {
            p.x.insert(XVar {
                request: req(r)?,
                nf: nf(i)?,
                node: node(k)?,
            });
        }
        for (r, i, k, s, d) in &doc.y {
            p.y.insert(YVar {
                request: req(r)?,
                nf: nf(i)?,
                node: node(k)?,
                head: node(s)?,
                dest: node(d)?,
            });
        }
        if let Some(zs) = &doc.z {
            let mut set = BTreeSet::new();
            for (r, i, j, k, m, s, d) in zs {
                set.insert(ZVar {
                    request: req(r)?,
                    first: nf(i)?,
                    second: nf(j)?,
                    first_node: node(k)?,
                    second_node: node(m)?,
                    head: node(s)?,
                    dest: node(d)?,
                });
            }
            p.z = Some(set);
        }
        Ok(p)
    }
}

/// Sparse JSON form of a placement: the index tuples of every variable set
/// to one, using instance ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementDoc {
    pub x: Vec<(String, String, String)>,
    pub y: Vec<(String, String, String, String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    #[allow(clippy::type_complexity)]
    pub z: Option<Vec<(String, String, String, String, String, String, String)>>,
}
