//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use pcc::evaluation::{check_constraints, evaluate_cost, ConstraintId};
use pcc::graph::{NodeIdx, PathTable};
use pcc::model::{NfIdx, Placement, ProblemInstance, XVar, YVar, ZVar};
use pcc::scenario::{generate_instance, Range, ScenarioParams};

pub const TINY1: &str = r#"{
  "network": {
    "nodes": ["a", "b", "c", "d"],
    "links": [
      {"u": "a", "v": "b", "cost": 1.0, "capacity_mbps": 2000.0},
      {"u": "b", "v": "c", "cost": 2.0, "capacity_mbps": 2000.0},
      {"u": "c", "v": "d", "cost": 3.0, "capacity_mbps": 2000.0}
    ],
    "candidates": ["b", "c"],
    "gateway": "a",
    "attachment": "a"
  },
  "catalog": {"f1": {"memory_mb": 20.0, "cpu_cores": 0.25}},
  "node_resources": {
    "b": {"memory_mb": 8192.0, "cpu_cores": 32.0},
    "c": {"memory_mb": 8192.0, "cpu_cores": 32.0}
  },
  "requests": [{"id": "r1", "chain": ["f1"], "flow_rate_mbps": 1.0, "heads": ["a"]}],
  "placement_cost": {},
  "mobility": {"destinations": {"d": 1.0}, "stay_probability": 0.0}
}"#;

pub fn tiny1() -> ProblemInstance {
    ProblemInstance::from_json(TINY1).unwrap()
}

/// Parameters for the tiny corpus: |K| ≤ 5, |R| ≤ 2, L ≤ 2, |S_r| ≤ 2 and
/// |D ∪ {o}| ≤ 2. Resources and link capacities are scarce enough that
/// constraints bind on a good share of instances.
pub fn tiny_params() -> ScenarioParams {
    ScenarioParams {
        num_candidates: Range::new(3, 5),
        degree: Range::new(1, 3),
        num_heads_per_request: Range::new(1, 2),
        num_destinations: Range::fixed(1),
        batch_size: Range::new(1, 2),
        catalog_size: 3,
        chain_length: Range::new(1, 2),
        link_cost: Range::new(1, 10),
        placement_cost: Range::new(0.0, 4.0),
        node_memory: Range::new(0.02, 0.07),
        node_cpu: Range::new(0.25, 1.0),
        nf_memory: Range::new(10.0, 40.0),
        nf_cpu: Range::new(0.125, 0.25),
        flow_rate: Range::new(1.0, 10.0),
        link_capacity: Range::new(10.0, 60.0),
        stay_probability: Range::new(0.0, 1.0),
        transit_fraction: 0.3,
        seed: 0,
    }
}

/// Number of exactly-one assignments: |K| ^ (number of (r, s, d, l) slots).
pub fn assignment_count(inst: &ProblemInstance) -> f64 {
    let slots: usize = inst
        .requests()
        .iter()
        .map(|r| r.heads.len() * r.len() * inst.targets().len())
        .sum();
    (inst.network().candidates().len() as f64).powi(slots as i32)
}

/// The first `n` seeds (from `start`) whose instance is small enough to
/// enumerate within `max_assignments`.
pub fn tiny_corpus(n: usize, start: u64, max_assignments: f64) -> Vec<(u64, ProblemInstance)> {
    let params = tiny_params();
    let mut out = Vec::new();
    let mut seed = start;
    while out.len() < n {
        if let Ok(inst) = generate_instance(&params, seed) {
            assert!(inst.network().candidates().len() <= 5);
            assert!(inst.requests().len() <= 2);
            assert!(inst.max_chain_len() <= 2);
            assert!(inst.requests().iter().all(|r| r.heads.len() <= 2));
            assert!(inst.targets().len() <= 2);
            if assignment_count(&inst) <= max_assignments {
                out.push((seed, inst));
            }
        }
        seed += 1;
    }
    out
}

/// Exhaustive oracle: every exactly-one assignment of a candidate to each
/// (r, s, d, l) slot, filtered by the constraint checker. Returns the
/// optimum cost and how many assignments were feasible.
pub fn brute_force(inst: &ProblemInstance, paths: &PathTable) -> (Option<f64>, u64) {
    let cands = inst.network().candidates().to_vec();
    let mut slots = Vec::new();
    for (r, req) in inst.requests().iter().enumerate() {
        for &s in &req.heads {
            for t in inst.targets() {
                for l in 0..req.len() {
                    slots.push((r, l, s, t.node));
                }
            }
        }
    }
    let mut digits = vec![0usize; slots.len()];
    let mut best: Option<f64> = None;
    let mut feasible = 0;
    loop {
        let placement = Placement::from_plan(inst, |r, l, s, d| {
            let i = slots.iter().position(|&slot| slot == (r, l, s, d)).unwrap();
            Some(cands[digits[i]])
        });
        if check_constraints(inst, &placement, paths).is_feasible() {
            feasible += 1;
            let total = evaluate_cost(inst, &placement, paths).unwrap().total;
            if best.is_none_or(|b| total < b) {
                best = Some(total);
            }
        }
        // odometer
        let mut i = 0;
        loop {
            if i == digits.len() {
                return (best, feasible);
            }
            digits[i] += 1;
            if digits[i] < cands.len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

/// One binary variable of the integer program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X(XVar),
    Y(YVar),
    Z(ZVar),
}

/// Every x, y and z index the integer program defines for `inst`.
pub fn dense_domain(inst: &ProblemInstance) -> Vec<Var> {
    let cands = inst.network().candidates();
    let mut out = Vec::new();
    for (r, req) in inst.requests().iter().enumerate() {
        for &nf in &req.chain {
            for &k in cands {
                out.push(Var::X(XVar { request: r, nf, node: k }));
                for &s in &req.heads {
                    for t in inst.targets() {
                        out.push(Var::Y(YVar {
                            request: r,
                            nf,
                            node: k,
                            head: s,
                            dest: t.node,
                        }));
                    }
                }
            }
        }
        for pair in req.chain.windows(2) {
            for &k in cands {
                for &m in cands {
                    for &s in &req.heads {
                        for t in inst.targets() {
                            out.push(Var::Z(ZVar {
                                request: r,
                                first: pair[0],
                                second: pair[1],
                                first_node: k,
                                second_node: m,
                                head: s,
                                dest: t.node,
                            }));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Toggles one variable; `placement.z` must be explicit.
pub fn flip(placement: &mut Placement, var: Var) {
    fn toggle<T: Ord>(set: &mut BTreeSet<T>, v: T) {
        if !set.remove(&v) {
            set.insert(v);
        }
    }
    match var {
        Var::X(x) => toggle(&mut placement.x, x),
        Var::Y(y) => toggle(&mut placement.y, y),
        Var::Z(z) => toggle(placement.z.as_mut().expect("explicit z"), z),
    }
}

fn over(lhs: f64, cap: f64) -> bool {
    lhs > cap + 1e-9 * cap.abs().max(1.0)
}

/// Literal re-evaluation of every inequality over the dense index domain.
/// Returns the violated families, capacity rows under per-pair budgets.
pub fn dense_oracle(inst: &ProblemInstance, paths: &PathTable, p: &Placement) -> BTreeSet<ConstraintId> {
    let cands = inst.network().candidates();
    let targets: Vec<NodeIdx> = inst.targets().iter().map(|t| t.node).collect();
    let xs: HashSet<(usize, NfIdx, NodeIdx)> = p.x.iter().map(|x| (x.request, x.nf, x.node)).collect();
    let ys: HashSet<(usize, NfIdx, NodeIdx, NodeIdx, NodeIdx)> =
        p.y.iter().map(|y| (y.request, y.nf, y.node, y.head, y.dest)).collect();
    let zs: HashSet<(usize, NfIdx, NfIdx, NodeIdx, NodeIdx, NodeIdx, NodeIdx)> = p
        .z
        .as_ref()
        .map(|z| {
            z.iter()
                .map(|z| (z.request, z.first, z.second, z.first_node, z.second_node, z.head, z.dest))
                .collect()
        })
        .unwrap_or_default();
    let x = |r, i, k| xs.contains(&(r, i, k)) as u8 as f64;
    let y = |r, i, k, s, d| ys.contains(&(r, i, k, s, d)) as u8 as f64;
    let mut bad = BTreeSet::new();

    // node resources
    for &k in cands {
        let (mut mem, mut cpu) = (0.0, 0.0);
        for (r, req) in inst.requests().iter().enumerate() {
            for &i in &req.chain {
                mem += inst.demand(i).memory_mb * x(r, i, k);
                cpu += inst.demand(i).cpu_cores * x(r, i, k);
            }
        }
        if over(mem, inst.capacity(k).memory_mb) || over(cpu, inst.capacity(k).cpu_cores) {
            bad.insert(ConstraintId::NodeResources);
        }
    }

    // head capacity over every head node s and candidate k
    let heads: BTreeSet<NodeIdx> = inst.requests().iter().flat_map(|r| r.heads.iter().copied()).collect();
    for &s in &heads {
        for &k in cands {
            let mut lhs = 0.0;
            for (r, req) in inst.requests().iter().enumerate() {
                if req.heads.contains(&s) {
                    for &d in &targets {
                        lhs += req.flow_rate * y(r, req.chain[0], k, s, d);
                    }
                }
            }
            if over(lhs, paths.bottleneck(s, k)) {
                bad.insert(ConstraintId::HeadCapacity);
            }
        }
    }

    // chain capacity with the y·y product written out
    for &k in cands {
        for &m in cands {
            let mut lhs = 0.0;
            for (r, req) in inst.requests().iter().enumerate() {
                for &s in &req.heads {
                    for &d in &targets {
                        for l in 0..req.len().saturating_sub(1) {
                            lhs += req.flow_rate * y(r, req.chain[l], k, s, d) * y(r, req.chain[l + 1], m, s, d);
                        }
                    }
                }
            }
            if over(lhs, paths.bottleneck(k, m)) {
                bad.insert(ConstraintId::ChainCapacity);
            }
        }
    }

    // tail capacity
    for &k in cands {
        for &d in &targets {
            let mut lhs = 0.0;
            for (r, req) in inst.requests().iter().enumerate() {
                for &s in &req.heads {
                    lhs += req.flow_rate * y(r, req.chain[req.len() - 1], k, s, d);
                }
            }
            if over(lhs, paths.bottleneck(k, d)) {
                bad.insert(ConstraintId::TailCapacity);
            }
        }
    }

    for (r, req) in inst.requests().iter().enumerate() {
        for &s in &req.heads {
            for &d in &targets {
                // exactly one visit
                for &i in &req.chain {
                    let visits: f64 = cands.iter().map(|&k| y(r, i, k, s, d)).sum();
                    if visits != 1.0 {
                        bad.insert(ConstraintId::VisitOnce);
                    }
                }
                // visit needs a host
                for &i in &req.chain {
                    for &k in cands {
                        if y(r, i, k, s, d) > x(r, i, k) {
                            bad.insert(ConstraintId::VisitNeedsHost);
                        }
                    }
                }
            }
        }
        // x implies at least one visit
        for &i in &req.chain {
            for &k in cands {
                let visits: f64 = req
                    .heads
                    .iter()
                    .flat_map(|&s| targets.iter().map(move |&d| (s, d)))
                    .map(|(s, d)| y(r, i, k, s, d))
                    .sum();
                if x(r, i, k) > visits {
                    bad.insert(ConstraintId::HostUnused);
                }
            }
        }
        // z linking rows on explicit z
        if p.z.is_some() {
            for w in req.chain.windows(2) {
                let (i, j) = (w[0], w[1]);
                for &k in cands {
                    for &m in cands {
                        for &s in &req.heads {
                            for &d in &targets {
                                let z = zs.contains(&(r, i, j, k, m, s, d)) as u8 as f64;
                                let (y1, y2) = (y(r, i, k, s, d), y(r, j, m, s, d));
                                if z > y1 {
                                    bad.insert(ConstraintId::ZFirst);
                                }
                                if z > y2 {
                                    bad.insert(ConstraintId::ZSecond);
                                }
                                if z < y1 + y2 - 1.0 {
                                    bad.insert(ConstraintId::ZProduct);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    bad
}
