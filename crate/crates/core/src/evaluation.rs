//! Objective value and constraint checking for a [`Placement`].

use std::collections::{BTreeMap, HashMap, HashSet};

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::graph::{NodeIdx, PathTable};
use crate::model::{NfIdx, Placement, ProblemInstance, XVar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("placement references {0}")]
    UnknownIndex(String),
    #[error("no stored path between {0} and {1}")]
    MissingPath(String, String),
    #[error("gain is undefined against a zero or negative reference cost ({0})")]
    UndefinedGain(f64),
}

/// Itemized objective. `penalty_term` is only non-zero for heuristic
/// results that left chain positions unhosted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CostReport {
    pub placement_term: f64,
    pub head_hop_term: f64,
    pub chain_hop_term: f64,
    pub tail_hop_term: f64,
    pub penalty_term: f64,
    pub total: f64,
}

impl CostReport {
    pub fn with_penalty(mut self, penalty: f64) -> Self {
        self.total += penalty - self.penalty_term;
        self.penalty_term = penalty;
        self
    }
}

/// Exact sum of products of finite doubles, rounded once to nearest-even.
/// The result depends only on the multiset of terms, never on their order,
/// so placements with mathematically equal cost report identical totals.
#[derive(Debug, Clone, Default)]
struct ExactSum {
    // value = acc * 2^exp
    acc: BigInt,
    exp: i64,
}

fn decode(x: f64) -> (i64, i64) {
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let frac = (bits & ((1u64 << 52) - 1)) as i64;
    let (m, e) = if biased == 0 { (frac, -1074) } else { (frac | (1i64 << 52), biased - 1075) };
    (if bits >> 63 == 1 { -m } else { m }, e)
}

fn ldexp(x: f64, k: i64) -> f64 {
    let step = |v: f64, k: i64| v * f64::from_bits(((k + 1023) as u64) << 52);
    let mut v = x;
    let mut k = k;
    while k > 1000 {
        v = step(v, 1000);
        k -= 1000;
    }
    while k < -1000 {
        v = step(v, -1000);
        k += 1000;
    }
    step(v, k)
}

impl ExactSum {
    fn add_product(&mut self, factors: &[f64]) {
        let mut m = BigInt::from(1);
        let mut e = 0i64;
        for &f in factors {
            if f == 0.0 {
                return;
            }
            let (fm, fe) = decode(f);
            m *= fm;
            e += fe;
        }
        self.add_scaled(m, e);
    }

    fn add_scaled(&mut self, m: BigInt, e: i64) {
        if self.acc.is_zero() {
            self.acc = m;
            self.exp = e;
        } else if e < self.exp {
            self.acc = (std::mem::take(&mut self.acc) << (self.exp - e) as usize) + m;
            self.exp = e;
        } else {
            self.acc += m << (e - self.exp) as usize;
        }
    }

    fn merge(&mut self, other: &ExactSum) {
        if !other.acc.is_zero() {
            self.add_scaled(other.acc.clone(), other.exp);
        }
    }

    fn value(&self) -> f64 {
        if self.acc.is_zero() {
            return 0.0;
        }
        let neg = self.acc.is_negative();
        let mag = self.acc.magnitude();
        let nbits = mag.bits() as i64;
        let shift = (nbits - 53).max(0);
        let mut top = (mag >> shift as usize).to_u64().expect("53 bits");
        if shift > 0 {
            let rem = mag - (num_bigint::BigUint::from(top) << shift as usize);
            let half = num_bigint::BigUint::from(1u8) << (shift - 1) as usize;
            if rem > half || (rem == half && top & 1 == 1) {
                top += 1;
            }
        }
        let v = ldexp(top as f64, self.exp + shift);
        if neg {
            -v
        } else {
            v
        }
    }
}

/// Checks that every index in the placement lies in its domain and returns
/// the routing weight ρ_d·w_s of each (request, head, dest) slot on demand.
fn route_weight(inst: &ProblemInstance, r: usize, head: NodeIdx, dest: NodeIdx) -> Option<[f64; 2]> {
    let req = inst.requests().get(r)?;
    Some([req.head_weight(head)?, inst.target_weight(dest)?])
}

fn describe(inst: &ProblemInstance, r: usize, nf: NfIdx, node: NodeIdx) -> String {
    let net = inst.network();
    let req = inst.requests().get(r).map(|q| q.id.clone()).unwrap_or_else(|| format!("#{r}"));
    let nf = if nf.0 < inst.nf_count() { inst.nf_name(nf).to_string() } else { format!("#{}", nf.0) };
    let node = if node.0 < net.node_count() { net.name(node).to_string() } else { format!("#{}", node.0) };
    format!("({req}, {nf}, {node})")
}

fn path_cost(inst: &ProblemInstance, paths: &PathTable, a: NodeIdx, b: NodeIdx) -> Result<f64, EvalError> {
    paths.try_entry(a, b).map(|e| e.cost).ok_or_else(|| {
        let n = |v: NodeIdx| {
            if v.0 < inst.network().node_count() {
                inst.network().name(v).to_string()
            } else {
                format!("#{}", v.0)
            }
        };
        EvalError::MissingPath(n(a), n(b))
    })
}

/// Objective value with the destination set extended by the attachment
/// node (weight ρ_o). z terms are products of y over consecutive chain
/// positions.
pub fn evaluate_cost(inst: &ProblemInstance, placement: &Placement, paths: &PathTable) -> Result<CostReport, EvalError> {
    let mut sums: [ExactSum; 4] = Default::default();
    let [placement_sum, head_sum, chain_sum, tail_sum] = &mut sums;
    let n = inst.network().node_count();

    for x in &placement.x {
        let req = inst
            .requests()
            .get(x.request)
            .ok_or_else(|| EvalError::UnknownIndex(describe(inst, x.request, x.nf, x.node)))?;
        if req.position_of(x.nf).is_none() || x.node.0 >= n {
            return Err(EvalError::UnknownIndex(describe(inst, x.request, x.nf, x.node)));
        }
        placement_sum.add_product(&[inst.placement_cost(x.nf, x.node)]);
    }

    let mut slots: HashMap<(usize, NodeIdx, NodeIdx, usize), Vec<NodeIdx>> = HashMap::new();
    for y in &placement.y {
        let bad = || EvalError::UnknownIndex(describe(inst, y.request, y.nf, y.node));
        let req = inst.requests().get(y.request).ok_or_else(bad)?;
        let pos = req.position_of(y.nf).ok_or_else(bad)?;
        let w = route_weight(inst, y.request, y.head, y.dest).ok_or_else(bad)?;
        if y.node.0 >= n {
            return Err(bad());
        }
        if pos == 0 {
            head_sum.add_product(&[w[0], w[1], path_cost(inst, paths, y.head, y.node)?]);
        }
        if pos + 1 == req.len() {
            tail_sum.add_product(&[w[0], w[1], path_cost(inst, paths, y.node, y.dest)?]);
        }
        slots.entry((y.request, y.head, y.dest, pos)).or_default().push(y.node);
    }

    for (&(r, s, d, pos), firsts) in &slots {
        let Some(seconds) = slots.get(&(r, s, d, pos + 1)) else { continue };
        let w = route_weight(inst, r, s, d).expect("checked above");
        for &k in firsts {
            for &m in seconds {
                chain_sum.add_product(&[w[0], w[1], path_cost(inst, paths, k, m)?]);
            }
        }
    }

    let mut total = ExactSum::default();
    for part in &sums {
        total.merge(part);
    }
    Ok(CostReport {
        placement_term: sums[0].value(),
        head_hop_term: sums[1].value(),
        chain_hop_term: sums[2].value(),
        tail_hop_term: sums[3].value(),
        penalty_term: 0.0,
        total: total.value(),
    })
}

/// Relative gain of `cost_a` over the reference `cost_b`.
pub fn gain(cost_a: f64, cost_b: f64) -> Result<f64, EvalError> {
    if !(cost_b > 0.0) {
        return Err(EvalError::UndefinedGain(cost_b));
    }
    Ok((cost_b - cost_a) / cost_b)
}

// ---------------------------------------------------------------------------
// Constraint checking
// ---------------------------------------------------------------------------

/// Constraint families, serialized under their row ids. The first nine are
/// the integer program's rows; the rest are structural or per-link
/// refinements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ConstraintId {
    #[serde(rename = "5a")]
    NodeResources,
    #[serde(rename = "5b")]
    HeadCapacity,
    #[serde(rename = "5c")]
    ChainCapacity,
    #[serde(rename = "5d")]
    TailCapacity,
    #[serde(rename = "5e")]
    VisitOnce,
    #[serde(rename = "5f")]
    VisitNeedsHost,
    #[serde(rename = "5g")]
    ZFirst,
    #[serde(rename = "5h")]
    ZSecond,
    #[serde(rename = "5i")]
    ZProduct,
    /// x set without any visit using it.
    #[serde(rename = "x_union")]
    HostUnused,
    #[serde(rename = "link_capacity")]
    LinkCapacity,
    #[serde(rename = "node_throughput")]
    NodeThroughput,
    /// A variable whose indices fall outside their domains.
    #[serde(rename = "index")]
    Index,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintViolation {
    pub constraint: ConstraintId,
    pub index: Vec<String>,
    /// rhs − lhs of the violated inequality; negative.
    pub slack: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ViolationReport {
    pub violations: Vec<ConstraintViolation>,
}

impl ViolationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn families(&self) -> std::collections::BTreeSet<ConstraintId> {
        self.violations.iter().map(|v| v.constraint).collect()
    }
}

/// How flow rates are charged against link capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CapacityModel {
    /// Independent budget per node pair equal to the pair's initial path
    /// bottleneck, one budget per constraint family.
    #[default]
    PerPair,
    /// Every flow is charged to each physical link of its path; flows from
    /// all families share the link.
    PerLink,
}

/// Absolute slack allowed before a capacity is reported as exceeded.
pub fn capacity_tolerance(capacity: f64) -> f64 {
    1e-9 * capacity.abs().max(1.0)
}

pub fn check_constraints(inst: &ProblemInstance, placement: &Placement, paths: &PathTable) -> ViolationReport {
    check_constraints_with(inst, placement, paths, CapacityModel::PerPair)
}

pub fn check_constraints_with(
    inst: &ProblemInstance,
    placement: &Placement,
    paths: &PathTable,
    model: CapacityModel,
) -> ViolationReport {
    let net = inst.network();
    let name = |v: NodeIdx| {
        if v.0 < net.node_count() {
            net.name(v).to_string()
        } else {
            format!("#{}", v.0)
        }
    };
    let nf_name = |f: NfIdx| {
        if f.0 < inst.nf_count() {
            inst.nf_name(f).to_string()
        } else {
            format!("#{}", f.0)
        }
    };
    let req_name = |r: usize| inst.requests().get(r).map(|q| q.id.clone()).unwrap_or_else(|| format!("#{r}"));
    let mut out = Vec::new();
    let mut push = |constraint, index: Vec<String>, slack: f64| out.push(ConstraintViolation { constraint, index, slack });

    // domain checks; out-of-domain variables are excluded from the rest
    let x_ok = |x: &XVar| {
        x.node.0 < net.node_count()
            && inst
                .requests()
                .get(x.request)
                .is_some_and(|q| q.position_of(x.nf).is_some())
    };
    let mut xs = HashSet::new();
    for x in &placement.x {
        if x_ok(x) {
            xs.insert(*x);
        } else {
            push(ConstraintId::Index, vec!["x".into(), req_name(x.request), nf_name(x.nf), name(x.node)], -1.0);
        }
    }
    let mut ys = Vec::new();
    for y in &placement.y {
        let ok = y.node.0 < net.node_count()
            && paths.contains(y.node)
            && route_weight(inst, y.request, y.head, y.dest).is_some()
            && inst.request(y.request).position_of(y.nf).is_some();
        if ok {
            ys.push(*y);
        } else {
            push(
                ConstraintId::Index,
                vec!["y".into(), req_name(y.request), nf_name(y.nf), name(y.node), name(y.head), name(y.dest)],
                -1.0,
            );
        }
    }

    // node resources
    let mut used: BTreeMap<NodeIdx, (f64, f64)> = BTreeMap::new();
    for x in &xs {
        if net.is_candidate(x.node) {
            let u = inst.demand(x.nf);
            let e = used.entry(x.node).or_default();
            e.0 += u.memory_mb;
            e.1 += u.cpu_cores;
        }
    }
    for (k, (mem, cpu)) in &used {
        let cap = inst.capacity(*k);
        if *mem > cap.memory_mb + capacity_tolerance(cap.memory_mb) {
            push(ConstraintId::NodeResources, vec![name(*k), "memory_mb".into()], cap.memory_mb - mem);
        }
        if *cpu > cap.cpu_cores + capacity_tolerance(cap.cpu_cores) {
            push(ConstraintId::NodeResources, vec![name(*k), "cpu_cores".into()], cap.cpu_cores - cpu);
        }
    }

    // exactly one visit per slot
    let mut slots: BTreeMap<(usize, NodeIdx, NodeIdx, usize), Vec<NodeIdx>> = BTreeMap::new();
    for y in &ys {
        let pos = inst.request(y.request).position_of(y.nf).unwrap();
        slots.entry((y.request, y.head, y.dest, pos)).or_default().push(y.node);
    }
    for (r, req) in inst.requests().iter().enumerate() {
        for &s in &req.heads {
            for t in inst.targets() {
                for (pos, &nf) in req.chain.iter().enumerate() {
                    let count = slots.get(&(r, s, t.node, pos)).map_or(0, Vec::len);
                    if count != 1 {
                        push(
                            ConstraintId::VisitOnce,
                            vec![req.id.clone(), name(s), name(t.node), (pos + 1).to_string(), nf_name(nf)],
                            if count == 0 { -1.0 } else { 1.0 - count as f64 },
                        );
                    }
                }
            }
        }
    }

    // visits need a host, hosts need a visit
    let mut hosted_by_visit = HashSet::new();
    for y in &ys {
        let x = XVar {
            request: y.request,
            nf: y.nf,
            node: y.node,
        };
        hosted_by_visit.insert(x);
        if !xs.contains(&x) {
            push(
                ConstraintId::VisitNeedsHost,
                vec![req_name(y.request), nf_name(y.nf), name(y.node), name(y.head), name(y.dest)],
                -1.0,
            );
        }
    }
    let mut unused: Vec<_> = xs.iter().filter(|x| !hosted_by_visit.contains(x)).collect();
    unused.sort();
    for x in unused {
        push(ConstraintId::HostUnused, vec![req_name(x.request), nf_name(x.nf), name(x.node)], -1.0);
    }

    // z linking rows, only when z was supplied explicitly
    if let Some(zs) = &placement.z {
        let yset: HashSet<_> = ys.iter().map(|y| (y.request, y.nf, y.node, y.head, y.dest)).collect();
        for z in zs {
            let consecutive = inst.requests().get(z.request).is_some_and(|q| {
                q.position_of(z.first)
                    .is_some_and(|p| q.chain.get(p + 1) == Some(&z.second))
            });
            let idx = || {
                vec![
                    req_name(z.request),
                    nf_name(z.first),
                    nf_name(z.second),
                    name(z.first_node),
                    name(z.second_node),
                    name(z.head),
                    name(z.dest),
                ]
            };
            if !consecutive {
                let mut i = idx();
                i.insert(0, "z".into());
                push(ConstraintId::Index, i, -1.0);
                continue;
            }
            if !yset.contains(&(z.request, z.first, z.first_node, z.head, z.dest)) {
                push(ConstraintId::ZFirst, idx(), -1.0);
            }
            if !yset.contains(&(z.request, z.second, z.second_node, z.head, z.dest)) {
                push(ConstraintId::ZSecond, idx(), -1.0);
            }
        }
        let zset: HashSet<_> = zs.iter().copied().collect();
        for z in &placement.derived_z(inst) {
            let both_valid = yset.contains(&(z.request, z.first, z.first_node, z.head, z.dest))
                && yset.contains(&(z.request, z.second, z.second_node, z.head, z.dest));
            if both_valid && !zset.contains(z) {
                push(
                    ConstraintId::ZProduct,
                    vec![
                        req_name(z.request),
                        nf_name(z.first),
                        nf_name(z.second),
                        name(z.first_node),
                        name(z.second_node),
                        name(z.head),
                        name(z.dest),
                    ],
                    -1.0,
                );
            }
        }
    }

    // flows: (family, from, to, rate)
    let mut flows: Vec<(ConstraintId, NodeIdx, NodeIdx, f64)> = Vec::new();
    for (&(r, s, d, pos), nodes) in &slots {
        let req = inst.request(r);
        let rate = req.flow_rate;
        if pos == 0 {
            for &k in nodes {
                flows.push((ConstraintId::HeadCapacity, s, k, rate));
            }
        }
        if pos + 1 == req.len() {
            for &k in nodes {
                flows.push((ConstraintId::TailCapacity, k, d, rate));
            }
        }
        if let Some(next) = slots.get(&(r, s, d, pos + 1)) {
            for &k in nodes {
                for &m in next {
                    flows.push((ConstraintId::ChainCapacity, k, m, rate));
                }
            }
        }
    }

    match model {
        CapacityModel::PerPair => {
            let mut load: BTreeMap<(ConstraintId, NodeIdx, NodeIdx), f64> = BTreeMap::new();
            for (fam, a, b, rate) in flows {
                *load.entry((fam, a, b)).or_default() += rate;
            }
            for ((fam, a, b), l) in load {
                let cap = paths.bottleneck(a, b);
                if l > cap + capacity_tolerance(cap) {
                    push(fam, vec![name(a), name(b)], cap - l);
                }
            }
        }
        CapacityModel::PerLink => {
            let mut link_load: BTreeMap<usize, f64> = BTreeMap::new();
            let mut node_load: BTreeMap<NodeIdx, f64> = BTreeMap::new();
            for (_, a, b, rate) in flows {
                let entry = paths.entry(a, b);
                if entry.links.is_empty() {
                    *node_load.entry(a).or_default() += rate;
                }
                for l in &entry.links {
                    *link_load.entry(l.0).or_default() += rate;
                }
            }
            for (l, load) in link_load {
                let link = &net.links()[l];
                if load > link.capacity + capacity_tolerance(link.capacity) {
                    push(ConstraintId::LinkCapacity, vec![name(link.u), name(link.v)], link.capacity - load);
                }
            }
            for (v, load) in node_load {
                let cap = net.node_throughput(v);
                if load > cap + capacity_tolerance(cap) {
                    push(ConstraintId::NodeThroughput, vec![name(v)], cap - load);
                }
            }
        }
    }

    ViolationReport { violations: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::tiny1_doc;
    use crate::model::{ProblemInstance, Resources, YVar};

    fn exact(terms: &[&[f64]]) -> f64 {
        let mut sum = ExactSum::default();
        for t in terms {
            sum.add_product(t);
        }
        sum.value()
    }

    #[test]
    fn exact_sum_ignores_order() {
        let a: &[f64] = &[0.1, 3.0];
        let b: &[f64] = &[0.7, 0.3, 5.0];
        let c: &[f64] = &[1e-3];
        let d: &[f64] = &[-0.2, 1.0];
        assert_eq!(exact(&[a, b, c, d]).to_bits(), exact(&[d, c, b, a]).to_bits());
        assert_eq!(exact(&[&[0.1], &[0.2]]), 0.30000000000000004);
        assert_eq!(exact(&[&[0.1, 0.1], &[0.1, 0.1]]), 0.020000000000000004);
        assert_eq!(exact(&[&[1e300, 1e10], &[-1e300, 1e10]]), 0.0);
        assert_eq!(exact(&[&[1e-320], &[2.0, 1e-320]]), 3e-320);
    }

    #[test]
    fn exact_sum_rounds_ties_to_even() {
        let big = 2f64.powi(53);
        assert_eq!(exact(&[&[big], &[1.0]]), big);
        assert_eq!(exact(&[&[big], &[3.0]]), big + 4.0);
        assert_eq!(exact(&[&[big], &[1.0], &[1e-9]]), big + 2.0);
    }

    fn tiny1() -> (ProblemInstance, PathTable) {
        let inst = ProblemInstance::new(tiny1_doc()).unwrap();
        let paths = inst.path_table().unwrap();
        (inst, paths)
    }

    fn at(inst: &ProblemInstance, node: &str) -> Placement {
        let k = inst.network().lookup(node).unwrap();
        Placement::from_plan(inst, |_, _, _, _| Some(k))
    }

    #[test]
    fn tiny1_both_on_path_placements_cost_six() {
        let (inst, paths) = tiny1();
        let b = evaluate_cost(&inst, &at(&inst, "b"), &paths).unwrap();
        assert_eq!((b.head_hop_term, b.tail_hop_term, b.total), (1.0, 5.0, 6.0));
        let c = evaluate_cost(&inst, &at(&inst, "c"), &paths).unwrap();
        assert_eq!((c.head_hop_term, c.tail_hop_term, c.total), (3.0, 3.0, 6.0));
        assert_eq!(c.chain_hop_term, 0.0);
        assert_eq!(c.placement_term, 0.0);
    }

    #[test]
    fn colocated_head_and_target_costs_nothing() {
        let mut doc = tiny1_doc();
        doc.requests[0].heads = vec!["b".into()];
        doc.mobility.destinations = [("b".to_string(), 1.0)].into();
        let inst = ProblemInstance::new(doc).unwrap();
        let paths = inst.path_table().unwrap();
        assert_eq!(evaluate_cost(&inst, &at(&inst, "b"), &paths).unwrap().total, 0.0);
    }

    #[test]
    fn placement_cost_counted_once_per_host() {
        let mut doc = tiny1_doc();
        doc.placement_cost = [("f1".to_string(), [("b".to_string(), 2.5)].into())].into();
        let inst = ProblemInstance::new(doc).unwrap();
        let paths = inst.path_table().unwrap();
        let rep = evaluate_cost(&inst, &at(&inst, "b"), &paths).unwrap();
        assert_eq!(rep.placement_term, 2.5);
        assert_eq!(rep.total, 8.5);
    }

    #[test]
    fn unknown_indices_are_errors() {
        let (inst, paths) = tiny1();
        let mut p = at(&inst, "b");
        p.y.insert(YVar {
            request: 0,
            nf: NfIdx(0),
            node: NodeIdx(1),
            head: NodeIdx(2),
            dest: NodeIdx(3),
        });
        assert!(matches!(evaluate_cost(&inst, &p, &paths), Err(EvalError::UnknownIndex(_))));
    }

    #[test]
    fn gains() {
        assert!((gain(90.0, 100.0).unwrap() - 0.10).abs() < 1e-12);
        assert_eq!(gain(100.0, 100.0).unwrap(), 0.0);
        assert!((gain(74.0, 100.0).unwrap() - 0.26).abs() < 1e-12);
        assert_eq!(gain(1.0, 0.0), Err(EvalError::UndefinedGain(0.0)));
    }

    #[test]
    fn feasible_placement_has_no_violations() {
        let (inst, paths) = tiny1();
        let p = at(&inst, "b").with_explicit_z(&inst);
        assert!(check_constraints(&inst, &p, &paths).is_feasible());
        assert!(check_constraints_with(&inst, &p, &paths, CapacityModel::PerLink).is_feasible());
    }

    #[test]
    fn memory_overflow_flagged_as_node_resources() {
        let mut doc = tiny1_doc();
        doc.node_resources.insert("b".into(), Resources::new(10.0, 32.0));
        let inst = ProblemInstance::new(doc).unwrap();
        let paths = inst.path_table().unwrap();
        let rep = check_constraints(&inst, &at(&inst, "b"), &paths);
        assert_eq!(rep.violations.len(), 1);
        let v = &rep.violations[0];
        assert_eq!(v.constraint, ConstraintId::NodeResources);
        assert_eq!(v.index, vec!["b".to_string(), "memory_mb".to_string()]);
        assert_eq!(v.slack, -10.0);
    }

    #[test]
    fn visit_without_host_flagged() {
        let (inst, paths) = tiny1();
        let mut p = at(&inst, "b");
        p.x.clear();
        let fams = check_constraints(&inst, &p, &paths).families();
        assert_eq!(fams.into_iter().collect::<Vec<_>>(), vec![ConstraintId::VisitNeedsHost]);
    }

    #[test]
    fn missing_and_duplicate_visits_flagged() {
        let (inst, paths) = tiny1();
        let mut p = at(&inst, "b");
        let first = *p.y.iter().next().unwrap();
        p.y.remove(&first);
        let rep = check_constraints(&inst, &p, &paths);
        assert!(rep.families().contains(&ConstraintId::VisitOnce));

        let mut p = at(&inst, "b");
        let c = inst.network().lookup("c").unwrap();
        p.y.insert(YVar { node: c, ..first });
        p.x.insert(XVar { request: 0, nf: first.nf, node: c });
        let rep = check_constraints(&inst, &p, &paths);
        assert_eq!(rep.families().into_iter().collect::<Vec<_>>(), vec![ConstraintId::VisitOnce]);
    }

    #[test]
    fn per_pair_vs_per_link_capacity() {
        // two requests whose head and tail hops share link a-b
        let mut doc = tiny1_doc();
        for l in &mut doc.network.links {
            l.capacity_mbps = 3.0;
        }
        doc.requests[0].flow_rate_mbps = 2.0;
        doc.mobility = crate::model::MobilityDoc {
            destinations: [("a".to_string(), 1.0)].into(),
            stay_probability: 0.0,
        };
        doc.network.attachment = "a".into();
        let inst = ProblemInstance::new(doc).unwrap();
        let paths = inst.path_table().unwrap();
        let p = at(&inst, "b");
        // head a->b carries 2, tail b->a carries 2: separate pair budgets of 3
        assert!(check_constraints(&inst, &p, &paths).is_feasible());
        // on the shared physical link the load is 4 > 3
        let rep = check_constraints_with(&inst, &p, &paths, CapacityModel::PerLink);
        assert_eq!(rep.families().into_iter().collect::<Vec<_>>(), vec![ConstraintId::LinkCapacity]);
    }
}
