//! Exact branch-and-bound over the 0-1 program for desk-scale instances, and
//! export of the linearized program in LP file format.
//!
//! The search assigns one hosting candidate to every visit slot
//! (request r, chain position l, head s, destination d), in that
//! lexicographic order, trying candidates in ascending node order. x is the
//! union of the chosen hosts. Open nodes are expanded best-first on an
//! admissible bound; equal bounds go to the lexicographically smaller
//! assignment, which makes the search (and the returned placement)
//! deterministic.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::evaluation::{capacity_tolerance, evaluate_cost, CostReport};
use crate::graph::{NodeIdx, PathTable};
use crate::model::{Placement, ProblemInstance, Resources};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub max_nodes_expanded: u64,
    pub wall_time: Duration,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_nodes_expanded: 10_000_000,
            wall_time: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProofStatus {
    Optimal,
    BudgetExceeded,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct ExactOutcome {
    pub status: ProofStatus,
    /// Optimal placement, or the incumbent when the budget ran out.
    pub placement: Option<Placement>,
    pub cost: Option<CostReport>,
    pub nodes_expanded: u64,
}

/// Size limits the exact search is meant for.
pub fn is_desk_scale(inst: &ProblemInstance) -> bool {
    inst.network().candidates().len() <= 6
        && inst.requests().len() <= 3
        && inst.max_chain_len() <= 3
        && inst.requests().iter().all(|r| r.heads.len() <= 2)
        && inst.targets().len() <= 2
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    request: usize,
    position: usize,
    head: NodeIdx,
    target: usize,
    route: usize,
    weight: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Family {
    Head,
    Chain,
    Tail,
}

#[derive(Clone)]
struct State {
    fixed: f64,
    last: Vec<Option<NodeIdx>>,
    hosts: Vec<Vec<usize>>,
    usage: Vec<Resources>,
    loads: HashMap<(Family, NodeIdx, NodeIdx), f64>,
}

/// Precomputed search structure for one instance.
pub struct Search<'a> {
    inst: &'a ProblemInstance,
    paths: &'a PathTable,
    candidates: Vec<NodeIdx>,
    slots: Vec<Slot>,
    /// first slot index of each (request, position) group
    group_of_slot: Vec<usize>,
    routes: Vec<(usize, NodeIdx, usize, f64)>,
    /// to_target[t][n][node]: cheapest way to visit n more candidates from
    /// `node` and then reach target t, ignoring capacity.
    to_target: Vec<Vec<HashMap<NodeIdx, f64>>>,
    min_placement_cost: Vec<f64>,
}

impl<'a> Search<'a> {
    pub fn new(inst: &'a ProblemInstance, paths: &'a PathTable) -> Self {
        let candidates = inst.network().candidates().to_vec();
        let mut routes = Vec::new();
        let mut route_index = HashMap::new();
        for (r, req) in inst.requests().iter().enumerate() {
            for (si, &s) in req.heads.iter().enumerate() {
                for (t, tgt) in inst.targets().iter().enumerate() {
                    route_index.insert((r, s, t), routes.len());
                    routes.push((r, s, t, req.head_weights[si] * tgt.weight));
                }
            }
        }
        let mut slots = Vec::new();
        let mut group_of_slot = Vec::new();
        let mut group = 0;
        for (r, req) in inst.requests().iter().enumerate() {
            for position in 0..req.len() {
                for &s in &req.heads {
                    for t in 0..inst.targets().len() {
                        let route = route_index[&(r, s, t)];
                        slots.push(Slot {
                            request: r,
                            position,
                            head: s,
                            target: t,
                            route,
                            weight: routes[route].3,
                        });
                        group_of_slot.push(group);
                    }
                }
                group += 1;
            }
        }

        let max_len = inst.max_chain_len();
        let relevant = paths.relevant();
        let to_target = inst
            .targets()
            .iter()
            .map(|t| {
                let mut layers: Vec<HashMap<NodeIdx, f64>> = Vec::with_capacity(max_len + 1);
                layers.push(relevant.iter().map(|&a| (a, paths.cost(a, t.node))).collect());
                for n in 1..=max_len {
                    let prev = &layers[n - 1];
                    let layer = relevant
                        .iter()
                        .map(|&a| {
                            let best = candidates
                                .iter()
                                .map(|&k| paths.cost(a, k) + prev[&k])
                                .fold(f64::INFINITY, f64::min);
                            (a, best)
                        })
                        .collect();
                    layers.push(layer);
                }
                layers
            })
            .collect();

        let min_placement_cost = (0..inst.nf_count())
            .map(|i| {
                candidates
                    .iter()
                    .map(|&k| inst.placement_cost(crate::model::NfIdx(i), k))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();

        Self {
            inst,
            paths,
            candidates,
            slots,
            group_of_slot,
            routes,
            to_target,
            min_placement_cost,
        }
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn candidates(&self) -> &[NodeIdx] {
        &self.candidates
    }

    /// (request, 0-based position, head, destination) of each slot in
    /// branching order.
    pub fn slot_keys(&self) -> Vec<(usize, usize, NodeIdx, NodeIdx)> {
        self.slots
            .iter()
            .map(|s| (s.request, s.position, s.head, self.inst.targets()[s.target].node))
            .collect()
    }

    fn root(&self) -> State {
        State {
            fixed: 0.0,
            last: vec![None; self.routes.len()],
            hosts: vec![Vec::new(); self.group_of_slot.last().map_or(0, |g| g + 1)],
            usage: vec![Resources::ZERO; self.candidates.len()],
            loads: HashMap::new(),
        }
    }

    /// Assigns candidate `ci` to slot `si`. Returns false when a resource
    /// or per-pair capacity budget is exceeded; `state` is then garbage.
    fn apply(&self, state: &mut State, si: usize, ci: usize) -> bool {
        let slot = self.slots[si];
        let req = self.inst.request(slot.request);
        let k = self.candidates[ci];
        let nf = req.chain[slot.position];
        let dest = self.inst.targets()[slot.target].node;
        let rate = req.flow_rate;
        let mut feasible = true;

        let g = self.group_of_slot[si];
        if !state.hosts[g].contains(&ci) {
            state.hosts[g].push(ci);
            state.fixed += self.inst.placement_cost(nf, k);
            let cap = self.inst.capacity(k);
            let u = &mut state.usage[ci];
            *u += self.inst.demand(nf);
            if u.memory_mb > cap.memory_mb + capacity_tolerance(cap.memory_mb)
                || u.cpu_cores > cap.cpu_cores + capacity_tolerance(cap.cpu_cores)
            {
                feasible = false;
            }
        }

        let charge = |fam: Family, a: NodeIdx, b: NodeIdx, state: &mut State| {
            let load = state.loads.entry((fam, a, b)).or_default();
            *load += rate;
            let cap = self.paths.bottleneck(a, b);
            *load <= cap + capacity_tolerance(cap)
        };

        let from = match state.last[slot.route] {
            None => {
                feasible &= charge(Family::Head, slot.head, k, state);
                slot.head
            }
            Some(m) => {
                feasible &= charge(Family::Chain, m, k, state);
                m
            }
        };
        state.fixed += slot.weight * self.paths.cost(from, k);
        if slot.position + 1 == req.len() {
            feasible &= charge(Family::Tail, k, dest, state);
            state.fixed += slot.weight * self.paths.cost(k, dest);
        }
        state.last[slot.route] = Some(k);
        feasible
    }

    /// Relaxed cost of everything not yet assigned after `assigned` slots.
    fn remaining(&self, state: &State, assigned: usize) -> f64 {
        let mut total = 0.0;
        // routing: each route's cheapest completion, capacity ignored
        let mut done = vec![0usize; self.routes.len()];
        for s in &self.slots[..assigned] {
            done[s.route] += 1;
        }
        for (ri, &(r, s, t, w)) in self.routes.iter().enumerate() {
            let len = self.inst.request(r).len();
            let left = len - done[ri];
            if left == 0 || w == 0.0 {
                continue;
            }
            let from = state.last[ri].unwrap_or(s);
            total += w * self.to_target[t][left][&from];
        }
        // placement: cheapest host for every (request, position) not yet hosted
        for (si, s) in self.slots.iter().enumerate().skip(assigned) {
            let first_of_group = si == 0 || self.group_of_slot[si - 1] != self.group_of_slot[si];
            if first_of_group && state.hosts[self.group_of_slot[si]].is_empty() {
                let nf = self.inst.request(s.request).chain[s.position];
                total += self.min_placement_cost[nf.0];
            }
        }
        total
    }

    /// Admissible lower bound for a partial assignment: exact cost of the
    /// assigned part plus, per unfinished route, the cheapest completion
    /// through the remaining positions to its destination, plus the
    /// cheapest placement cost of every NF not yet hosted. Capacity and
    /// node resources are ignored.
    pub fn lower_bound(&self, partial: &[NodeIdx]) -> f64 {
        let mut state = self.root();
        for (si, node) in partial.iter().enumerate() {
            let ci = self
                .candidates
                .iter()
                .position(|c| c == node)
                .expect("partial assignment uses a non-candidate node");
            self.apply(&mut state, si, ci);
        }
        state.fixed + self.remaining(&state, partial.len())
    }

    fn placement_of(&self, assignment: &[u8]) -> Placement {
        let keys: HashMap<(usize, usize, NodeIdx, NodeIdx), NodeIdx> = self
            .slot_keys()
            .into_iter()
            .zip(assignment)
            .map(|(key, &ci)| (key, self.candidates[ci as usize]))
            .collect();
        Placement::from_plan(self.inst, |r, l, s, d| keys.get(&(r, l, s, d)).copied())
    }

    pub fn solve(&self, budget: Budget) -> ExactOutcome {
        let started = Instant::now();
        let n = self.slots.len();
        let mut heap = BinaryHeap::new();
        let root = self.root();
        heap.push(Open {
            bound: self.remaining(&root, 0),
            assignment: Vec::new(),
        });
        let mut incumbent: Option<(f64, Vec<u8>)> = None;
        let mut expanded = 0u64;
        let mut status = ProofStatus::Infeasible;

        if n == 0 {
            incumbent = Some((0.0, Vec::new()));
            heap.clear();
        }

        while let Some(open) = heap.pop() {
            if let Some((best, _)) = &incumbent {
                if open.bound >= *best {
                    break;
                }
            }
            if expanded >= budget.max_nodes_expanded
                || (expanded.is_multiple_of(1024) && started.elapsed() > budget.wall_time)
            {
                status = ProofStatus::BudgetExceeded;
                break;
            }
            expanded += 1;

            let mut state = root.clone();
            for (si, &ci) in open.assignment.iter().enumerate() {
                self.apply(&mut state, si, ci as usize);
            }
            let si = open.assignment.len();
            for ci in 0..self.candidates.len() {
                let mut child = state.clone();
                if !self.apply(&mut child, si, ci) {
                    continue;
                }
                let bound = child.fixed + self.remaining(&child, si + 1);
                if incumbent.as_ref().is_some_and(|(best, _)| bound >= *best) {
                    continue;
                }
                let mut assignment = open.assignment.clone();
                assignment.push(ci as u8);
                if si + 1 == n {
                    incumbent = Some((bound, assignment));
                } else {
                    heap.push(Open { bound, assignment });
                }
            }
        }
        if status != ProofStatus::BudgetExceeded && incumbent.is_some() {
            status = ProofStatus::Optimal;
        }

        let (placement, cost) = match incumbent {
            Some((_, assignment)) => {
                let p = self.placement_of(&assignment);
                let c = evaluate_cost(self.inst, &p, self.paths).expect("search only produces in-domain placements");
                (Some(p), Some(c))
            }
            None => (None, None),
        };
        ExactOutcome {
            status,
            placement,
            cost,
            nodes_expanded: expanded,
        }
    }
}

struct Open {
    bound: f64,
    assignment: Vec<u8>,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // reversed: BinaryHeap pops the smallest bound, then smallest assignment
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.assignment.cmp(&self.assignment))
    }
}

/// Solves the placement problem to optimality under the per-pair capacity
/// reading, within `budget`.
pub fn solve_exact(inst: &ProblemInstance, paths: &PathTable, budget: Budget) -> ExactOutcome {
    assert!(inst.network().candidates().len() <= u8::MAX as usize, "too many candidates for exact search");
    Search::new(inst, paths).solve(budget)
}

// ---------------------------------------------------------------------------
// LP export
// ---------------------------------------------------------------------------

/// Largest model `export_lp` will write.
pub const MAX_EXPORT_VARIABLES: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("model would have {0} variables, above the export limit of {MAX_EXPORT_VARIABLES}")]
    TooLarge(usize),
}

/// Counts of each variable family in the exported model.
pub fn export_variable_counts(inst: &ProblemInstance) -> (usize, usize, usize) {
    let k = inst.network().candidates().len();
    let t = inst.targets().len();
    let (mut nx, mut ny, mut nz) = (0, 0, 0);
    for r in inst.requests() {
        let l = r.len();
        let s = r.heads.len();
        nx += l * k;
        ny += l * k * s * t;
        nz += l.saturating_sub(1) * k * k * s * t;
    }
    (nx, ny, nz)
}

struct Expr {
    terms: Vec<(f64, String)>,
}

impl Expr {
    fn new() -> Self {
        Self { terms: Vec::new() }
    }

    fn add(&mut self, coef: f64, var: String) {
        if coef != 0.0 {
            self.terms.push((coef, var));
        }
    }

    fn write(&self, out: &mut String) {
        for (i, (c, v)) in self.terms.iter().enumerate() {
            if i > 0 && i % 6 == 0 {
                out.push_str("\n   ");
            }
            if i == 0 {
                if *c < 0.0 {
                    let _ = write!(out, "- {} {v}", -c);
                } else {
                    let _ = write!(out, "{c} {v}");
                }
            } else if *c < 0.0 {
                let _ = write!(out, " - {} {v}", -c);
            } else {
                let _ = write!(out, " + {c} {v}");
            }
        }
    }
}

/// Writes the fully linearized 0-1 program in LP file format.
///
/// Variable names: `x_<r>_<i>_<k>`, `y_<r>_<i>_<k>_<s>_<d>` and
/// `z_<r>_<i>_<j>_<k>_<m>_<s>_<d>`, built from request, NF and node ids.
/// The destination index d ranges over the mobility destinations plus the
/// attachment node. z exists only for NFs at consecutive chain positions.
/// Capacity rows whose bound is infinite are omitted, as are zero
/// objective coefficients.
pub fn export_lp(inst: &ProblemInstance, paths: &PathTable) -> Result<String, ExportError> {
    let (nx, ny, nz) = export_variable_counts(inst);
    if nx + ny + nz > MAX_EXPORT_VARIABLES {
        return Err(ExportError::TooLarge(nx + ny + nz));
    }
    let net = inst.network();
    let name = |v: NodeIdx| net.name(v);
    let cands = net.candidates();
    let targets = inst.targets();
    let xv = |r: usize, i, k| format!("x_{}_{}_{}", inst.request(r).id, inst.nf_name(i), name(k));
    let yv = |r: usize, i, k, s, d| format!("y_{}_{}_{}_{}_{}", inst.request(r).id, inst.nf_name(i), name(k), name(s), name(d));
    #[allow(clippy::too_many_arguments)]
    let zv = |r: usize, i, j, k, m, s, d| {
        format!(
            "z_{}_{}_{}_{}_{}_{}_{}",
            inst.request(r).id,
            inst.nf_name(i),
            inst.nf_name(j),
            name(k),
            name(m),
            name(s),
            name(d)
        )
    };

    let mut binaries = Vec::with_capacity(nx + ny + nz);
    let mut objective = Expr::new();
    let mut rows: Vec<(String, Expr, &'static str, f64)> = Vec::new();

    let mut mem_rows: Vec<Expr> = cands.iter().map(|_| Expr::new()).collect();
    let mut cpu_rows: Vec<Expr> = cands.iter().map(|_| Expr::new()).collect();
    let mut head_rows: std::collections::BTreeMap<(NodeIdx, NodeIdx), Expr> = Default::default();
    let mut chain_rows: std::collections::BTreeMap<(NodeIdx, NodeIdx), Expr> = Default::default();
    let mut tail_rows: std::collections::BTreeMap<(NodeIdx, NodeIdx), Expr> = Default::default();
    let mut link_rows: Vec<(String, Expr, &'static str, f64)> = Vec::new();

    for (r, req) in inst.requests().iter().enumerate() {
        let last = req.len() - 1;
        for &i in &req.chain {
            for (ci, &k) in cands.iter().enumerate() {
                let x = xv(r, i, k);
                objective.add(inst.placement_cost(i, k), x.clone());
                let u = inst.demand(i);
                mem_rows[ci].add(u.memory_mb, x.clone());
                cpu_rows[ci].add(u.cpu_cores, x.clone());
                binaries.push(x);
            }
        }
        for (si, &s) in req.heads.iter().enumerate() {
            for t in targets {
                let d = t.node;
                let w = req.head_weights[si] * t.weight;
                for (l, &i) in req.chain.iter().enumerate() {
                    let mut visit = Expr::new();
                    for &k in cands {
                        let y = yv(r, i, k, s, d);
                        let mut coef = 0.0;
                        if l == 0 {
                            coef += w * paths.cost(s, k);
                            head_rows.entry((s, k)).or_insert_with(Expr::new).add(req.flow_rate, y.clone());
                        }
                        if l == last {
                            coef += w * paths.cost(k, d);
                            tail_rows.entry((k, d)).or_insert_with(Expr::new).add(req.flow_rate, y.clone());
                        }
                        objective.add(coef, y.clone());
                        visit.add(1.0, y.clone());
                        let mut link = Expr::new();
                        link.add(1.0, y.clone());
                        link.add(-1.0, xv(r, i, k));
                        link_rows.push((format!("c5f_{}_{}_{}_{}_{}", req.id, inst.nf_name(i), name(k), name(s), name(d)), link, "<=", 0.0));
                        binaries.push(y);
                    }
                    rows.push((format!("c5e_{}_{}_{}_{}", req.id, name(s), name(d), l + 1), visit, "=", 1.0));
                }
                for l in 0..last {
                    let (i, j) = (req.chain[l], req.chain[l + 1]);
                    for &k in cands {
                        for &m in cands {
                            let z = zv(r, i, j, k, m, s, d);
                            objective.add(w * paths.cost(k, m), z.clone());
                            chain_rows.entry((k, m)).or_insert_with(Expr::new).add(req.flow_rate, z.clone());
                            let (y1, y2) = (yv(r, i, k, s, d), yv(r, j, m, s, d));
                            let tag = format!("{}_{}_{}_{}_{}_{}_{}", req.id, inst.nf_name(i), inst.nf_name(j), name(k), name(m), name(s), name(d));
                            let mut g = Expr::new();
                            g.add(1.0, z.clone());
                            g.add(-1.0, y1.clone());
                            link_rows.push((format!("c5g_{tag}"), g, "<=", 0.0));
                            let mut h = Expr::new();
                            h.add(1.0, z.clone());
                            h.add(-1.0, y2.clone());
                            link_rows.push((format!("c5h_{tag}"), h, "<=", 0.0));
                            let mut p = Expr::new();
                            p.add(1.0, z.clone());
                            p.add(-1.0, y1);
                            p.add(-1.0, y2);
                            link_rows.push((format!("c5i_{tag}"), p, ">=", -1.0));
                            binaries.push(z);
                        }
                    }
                }
            }
        }
    }

    let mut capacity_rows = Vec::new();
    for (ci, &k) in cands.iter().enumerate() {
        let cap = inst.capacity(k);
        let mem = std::mem::replace(&mut mem_rows[ci], Expr::new());
        let cpu = std::mem::replace(&mut cpu_rows[ci], Expr::new());
        if !mem.terms.is_empty() {
            capacity_rows.push((format!("c5a_mem_{}", name(k)), mem, "<=", cap.memory_mb));
            capacity_rows.push((format!("c5a_cpu_{}", name(k)), cpu, "<=", cap.cpu_cores));
        }
    }
    for (prefix, table) in [("c5b", head_rows), ("c5c", chain_rows), ("c5d", tail_rows)] {
        for ((a, b), e) in table {
            let cap = paths.bottleneck(a, b);
            if cap.is_finite() && !e.terms.is_empty() {
                capacity_rows.push((format!("{prefix}_{}_{}", name(a), name(b)), e, "<=", cap));
            }
        }
    }

    let mut out = String::new();
    out.push_str("Minimize\n obj: ");
    if objective.terms.is_empty() {
        if let Some(first) = binaries.first() {
            let _ = write!(out, "0 {first}");
        }
    } else {
        objective.write(&mut out);
    }
    out.push_str("\nSubject To\n");
    for (name, expr, sense, rhs) in capacity_rows.iter().chain(rows.iter()).chain(link_rows.iter()) {
        let _ = write!(out, " {name}: ");
        expr.write(&mut out);
        let _ = writeln!(out, " {sense} {rhs}");
    }
    out.push_str("Binaries\n");
    for chunk in binaries.chunks(8) {
        let _ = writeln!(out, " {}", chunk.join(" "));
    }
    out.push_str("End\n");
    Ok(out)
}
