//! Greedy placement along a probable route (PPCC), its mobility-oblivious
//! counterpart (SPBA) and the everything-at-the-gateway baseline (AGW).

use std::collections::HashMap;

use serde::Serialize;

use crate::evaluation::{capacity_tolerance, evaluate_cost, CapacityModel, CostReport, EvalError};
use crate::graph::{consume_flow, NodeIdx, PathTable, ResidualState};
use crate::model::{NfIdx, Placement, ProblemInstance};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HeuristicOptions {
    /// Cost charged per chain position left unhosted. Defaults to twice
    /// the longest stored path cost.
    pub penalty: Option<f64>,
    /// Capacity bookkeeping used to admit hops. `PerPair` admits exactly
    /// what the integer program's capacity rows admit; `PerLink` charges
    /// every physical link a route crosses.
    pub capacity: CapacityModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Unplaced {
    pub request: usize,
    /// 0-based chain position.
    pub position: usize,
    pub nf: NfIdx,
}

#[derive(Debug, Clone)]
pub struct HeuristicOutcome {
    pub placement: Placement,
    pub cost: CostReport,
    pub unplaced: Vec<Unplaced>,
}

impl HeuristicOutcome {
    pub fn fully_placed(&self) -> bool {
        self.unplaced.is_empty()
    }
}

/// Most probable final attachment over D ∪ {o}; ties go to the smallest
/// node index.
pub fn select_target(inst: &ProblemInstance) -> NodeIdx {
    let mut best = inst.targets()[0];
    for t in &inst.targets()[1..] {
        if t.weight > best.weight {
            best = *t;
        }
    }
    best.node
}

/// Head of `heads` closest to `target`, smallest index on ties.
fn closest_head(heads: &[NodeIdx], target: NodeIdx, paths: &PathTable) -> NodeIdx {
    let mut best = heads[0];
    for &s in &heads[1..] {
        if paths.cost(s, target) < paths.cost(best, target) {
            best = s;
        }
    }
    best
}

/// Candidate scan order: candidates on the start→target path by distance
/// from `start`, then every other candidate by distance from `start`.
fn scan_order(inst: &ProblemInstance, paths: &PathTable, start: NodeIdx, target: NodeIdx) -> (Vec<NodeIdx>, usize) {
    let net = inst.network();
    let by_distance = |v: &mut Vec<NodeIdx>| {
        v.sort_by(|&a, &b| paths.cost(start, a).total_cmp(&paths.cost(start, b)).then(a.cmp(&b)));
    };
    let mut on_path: Vec<NodeIdx> = paths
        .nodes(start, target)
        .iter()
        .copied()
        .filter(|&n| net.is_candidate(n))
        .collect();
    by_distance(&mut on_path);
    let mut rest: Vec<NodeIdx> = net
        .candidates()
        .iter()
        .copied()
        .filter(|k| !on_path.contains(k))
        .collect();
    by_distance(&mut rest);
    let primary = on_path.len();
    on_path.extend(rest);
    (on_path, primary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Hop {
    Head,
    Chain,
    Tail,
}

/// Remaining capacity under either bookkeeping model.
enum Ledger {
    /// Load per (hop family, ordered node pair), against the initial path
    /// bottleneck.
    Pair(HashMap<(Hop, NodeIdx, NodeIdx), f64>),
    Link,
}

impl Ledger {
    /// Reserves all `routes` or none of them.
    fn reserve(
        &mut self,
        inst: &ProblemInstance,
        paths: &PathTable,
        residual: &mut ResidualState,
        routes: &[(Hop, NodeIdx, NodeIdx, f64)],
    ) -> bool {
        match self {
            Ledger::Pair(load) => {
                let fits = routes.iter().all(|&(hop, a, b, rate)| {
                    let cap = paths.bottleneck(a, b);
                    load.get(&(hop, a, b)).copied().unwrap_or(0.0) + rate <= cap + capacity_tolerance(cap)
                });
                if fits {
                    for &(hop, a, b, rate) in routes {
                        *load.entry((hop, a, b)).or_default() += rate;
                    }
                }
                fits
            }
            Ledger::Link => {
                let saved = residual.clone();
                for &(_, a, b, rate) in routes {
                    if consume_flow(inst.network(), residual, paths.nodes(a, b), rate).is_err() {
                        *residual = saved;
                        return false;
                    }
                }
                true
            }
        }
    }
}

/// Per-request hosting plan produced by the greedy scan.
pub type HostPlan = Vec<Vec<Option<NodeIdx>>>;

/// The greedy scan shared by PPCC and SPBA. `target` is the attachment
/// the route is built towards.
///
/// For each request the closest head s to `target` starts the route; chain
/// functions are hosted in visiting order on the earliest scanned candidate
/// that still has the node resources and residual capacity for the hops
/// into it (including the final hops to every destination when it is the
/// last function). Reservations use the same multiplicities as the
/// capacity rows: one flow per (head, destination) pair the visit plan
/// serves.
pub fn greedy_plan(inst: &ProblemInstance, paths: &PathTable, target: NodeIdx, capacity: CapacityModel) -> HostPlan {
    let mut residual = ResidualState::new(inst.network(), inst.capacities().to_vec());
    let mut ledger = match capacity {
        CapacityModel::PerPair => Ledger::Pair(HashMap::new()),
        CapacityModel::PerLink => Ledger::Link,
    };
    let n_targets = inst.targets().len() as f64;
    let mut plan = Vec::with_capacity(inst.requests().len());

    for req in inst.requests() {
        let start = closest_head(&req.heads, target, paths);
        let (order, _) = scan_order(inst, paths, start, target);
        let n_heads = req.heads.len() as f64;
        let rate = req.flow_rate;
        let len = req.len();
        let mut hosts: Vec<Option<NodeIdx>> = vec![None; len];
        let mut pos = 0;
        let mut prev = start;

        'scan: for &k in &order {
            while pos < len {
                let nf = req.chain[pos];
                let demand = inst.demand(nf);
                if !demand.fits_within(&residual.resources[k.0]) {
                    break;
                }
                let mut routes = Vec::new();
                if pos == 0 {
                    routes.extend(req.heads.iter().map(|&s| (Hop::Head, s, k, rate * n_targets)));
                } else {
                    routes.push((Hop::Chain, prev, k, rate * n_heads * n_targets));
                }
                if pos + 1 == len {
                    routes.extend(inst.targets().iter().map(|t| (Hop::Tail, k, t.node, rate * n_heads)));
                }
                if !ledger.reserve(inst, paths, &mut residual, &routes) {
                    break;
                }
                residual.resources[k.0] -= demand;
                debug_assert!(residual.resources[k.0].memory_mb >= 0.0 && residual.resources[k.0].cpu_cores >= 0.0);
                hosts[pos] = Some(k);
                prev = k;
                pos += 1;
            }
            if pos == len {
                break 'scan;
            }
        }
        plan.push(hosts);
    }
    plan
}

fn finish(inst: &ProblemInstance, paths: &PathTable, plan: &HostPlan, opts: HeuristicOptions) -> Result<HeuristicOutcome, EvalError> {
    let placement = Placement::from_plan(inst, |r, l, _, _| plan[r][l]);
    let unplaced: Vec<Unplaced> = plan
        .iter()
        .enumerate()
        .flat_map(|(r, hosts)| {
            hosts.iter().enumerate().filter(|(_, h)| h.is_none()).map(move |(position, _)| Unplaced {
                request: r,
                position,
                nf: inst.request(r).chain[position],
            })
        })
        .collect();
    let penalty = opts.penalty.unwrap_or_else(|| 2.0 * paths.max_cost());
    let cost = evaluate_cost(inst, &placement, paths)?.with_penalty(penalty * unplaced.len() as f64);
    Ok(HeuristicOutcome {
        placement,
        cost,
        unplaced,
    })
}

/// PPCC: route every request towards the single most probable destination.
pub fn ppcc(inst: &ProblemInstance, paths: &PathTable) -> Result<HeuristicOutcome, EvalError> {
    ppcc_with(inst, paths, HeuristicOptions::default())
}

pub fn ppcc_with(inst: &ProblemInstance, paths: &PathTable, opts: HeuristicOptions) -> Result<HeuristicOutcome, EvalError> {
    let plan = greedy_plan(inst, paths, select_target(inst), opts.capacity);
    finish(inst, paths, &plan, opts)
}

/// SPBA: the same greedy mechanics with the route built towards the
/// current attachment node, as if the user never moved. The returned cost
/// is still evaluated under the true mobility profile.
pub fn spba(inst: &ProblemInstance, paths: &PathTable) -> Result<HeuristicOutcome, EvalError> {
    spba_with(inst, paths, HeuristicOptions::default())
}

pub fn spba_with(inst: &ProblemInstance, paths: &PathTable, opts: HeuristicOptions) -> Result<HeuristicOutcome, EvalError> {
    let plan = greedy_plan(inst, paths, inst.network().attachment(), opts.capacity);
    finish(inst, paths, &plan, opts)
}

/// AGW: every function of every request at the gateway, which is treated
/// as having unlimited capacity.
pub fn agw(inst: &ProblemInstance, paths: &PathTable) -> Result<(Placement, CostReport), EvalError> {
    let g = inst.network().gateway();
    let placement = Placement::from_plan(inst, |_, _, _, _| Some(g));
    let cost = evaluate_cost(inst, &placement, paths)?;
    Ok((placement, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{check_constraints_with, CapacityModel};
    use crate::model::tests::tiny1_doc;
    use crate::model::{ProblemInstance, Resources};

    fn build(doc: crate::model::InstanceDoc) -> (ProblemInstance, PathTable) {
        let inst = ProblemInstance::new(doc).unwrap();
        let paths = inst.path_table().unwrap();
        (inst, paths)
    }

    #[test]
    fn tiny1_trace() {
        let (inst, paths) = build(tiny1_doc());
        let a = inst.network().lookup("a").unwrap();
        let b = inst.network().lookup("b").unwrap();
        let c = inst.network().lookup("c").unwrap();
        let d = inst.network().lookup("d").unwrap();
        assert_eq!(select_target(&inst), d);
        assert_eq!(scan_order(&inst, &paths, a, d), (vec![b, c], 2));

        let out = ppcc(&inst, &paths).unwrap();
        assert!(out.fully_placed());
        assert_eq!(out.cost.total, 6.0);
        assert!(out.placement.x.iter().all(|x| x.node == b));
        assert!(check_constraints_with(&inst, &out.placement, &paths, CapacityModel::PerLink).is_feasible());
    }

    #[test]
    fn saturated_first_candidate_falls_through() {
        let mut doc = tiny1_doc();
        doc.node_resources.insert("b".into(), Resources::new(1.0, 32.0));
        let (inst, paths) = build(doc);
        let c = inst.network().lookup("c").unwrap();
        let out = ppcc(&inst, &paths).unwrap();
        assert!(out.fully_placed());
        assert!(out.placement.x.iter().all(|x| x.node == c));
        assert_eq!(out.cost.total, 6.0);
    }

    #[test]
    fn no_room_reports_unplaced_with_penalty() {
        let mut doc = tiny1_doc();
        doc.node_resources.insert("b".into(), Resources::new(1.0, 32.0));
        doc.node_resources.insert("c".into(), Resources::new(1.0, 32.0));
        let (inst, paths) = build(doc);
        let out = ppcc(&inst, &paths).unwrap();
        assert_eq!(
            out.unplaced,
            vec![Unplaced {
                request: 0,
                position: 0,
                nf: NfIdx(0)
            }]
        );
        assert!(out.placement.y.is_empty());
        // twice the longest path (a-d, 6)
        assert_eq!(out.cost.penalty_term, 12.0);
        assert_eq!(out.cost.total, 12.0);
    }

    #[test]
    fn target_is_most_probable_destination() {
        let mut doc = tiny1_doc();
        doc.mobility.destinations = [("b".to_string(), 0.3), ("c".to_string(), 0.6)].into();
        doc.mobility.stay_probability = 0.1;
        let (inst, _) = build(doc);
        assert_eq!(select_target(&inst), inst.network().lookup("c").unwrap());
    }

    #[test]
    fn target_ties_take_smallest_node() {
        let mut doc = tiny1_doc();
        doc.mobility.destinations = [("d".to_string(), 0.5), ("c".to_string(), 0.5)].into();
        let (inst, _) = build(doc);
        assert_eq!(select_target(&inst), inst.network().lookup("c").unwrap());
    }

    #[test]
    fn agw_at_gateway() {
        let (inst, paths) = build(tiny1_doc());
        let (p, cost) = agw(&inst, &paths).unwrap();
        assert!(p.x.iter().all(|x| x.node == inst.network().gateway()));
        assert_eq!(cost.total, 6.0);
        assert_eq!(cost.head_hop_term, 0.0);
    }

    #[test]
    fn agw_chain_hops_are_free() {
        let mut doc = tiny1_doc();
        doc.catalog.insert("f2".into(), Resources::new(10.0, 0.125));
        doc.requests[0].chain.push("f2".into());
        let (inst, paths) = build(doc);
        let (_, cost) = agw(&inst, &paths).unwrap();
        assert_eq!(cost.chain_hop_term, 0.0);
    }

    #[test]
    fn spba_matches_ppcc_when_user_stays() {
        let mut doc = tiny1_doc();
        doc.network.attachment = "d".into();
        let (inst, paths) = build(doc);
        let p = ppcc(&inst, &paths).unwrap();
        let s = spba(&inst, &paths).unwrap();
        assert_eq!(p.placement, s.placement);
        assert_eq!(p.cost.total, s.cost.total);
    }

    #[test]
    fn spba_pays_for_ignoring_mobility() {
        // user attached at a, certain to move to d; SPBA routes towards a
        let mut doc = tiny1_doc();
        doc.requests[0].heads = vec!["c".into()];
        let (inst, paths) = build(doc);
        let p = ppcc(&inst, &paths).unwrap();
        let s = spba(&inst, &paths).unwrap();
        assert_eq!(p.cost.total, 3.0);
        assert!(s.cost.total >= p.cost.total);
    }

    fn three_requests_on_thin_links() -> (ProblemInstance, PathTable) {
        let mut doc = tiny1_doc();
        for l in &mut doc.network.links {
            l.capacity_mbps = 5.0;
        }
        let mut second = doc.requests[0].clone();
        second.id = "r2".into();
        doc.requests.push(second.clone());
        second.id = "r3".into();
        doc.requests.push(second);
        build(doc)
    }

    #[test]
    fn per_link_capacity_limits_greedy() {
        let (inst, paths) = three_requests_on_thin_links();
        let opts = HeuristicOptions {
            capacity: CapacityModel::PerLink,
            ..HeuristicOptions::default()
        };
        let out = ppcc_with(&inst, &paths, opts).unwrap();
        let rep = check_constraints_with(&inst, &out.placement, &paths, CapacityModel::PerLink);
        // a-b carries 3 per request (two head hops, one tail hop to a): only r1 fits
        assert_eq!(out.unplaced.len(), 2);
        assert!(rep
            .violations
            .iter()
            .all(|v| v.constraint == crate::evaluation::ConstraintId::VisitOnce));
    }

    #[test]
    fn per_pair_capacity_spills_to_next_candidate() {
        let (inst, paths) = three_requests_on_thin_links();
        let b = inst.network().lookup("b").unwrap();
        let c = inst.network().lookup("c").unwrap();
        let out = ppcc(&inst, &paths).unwrap();
        assert!(out.fully_placed());
        // head pair (a, b) carries 2 per request against a bottleneck of 5
        let hosts: Vec<NodeIdx> = out.placement.x.iter().map(|x| x.node).collect();
        assert_eq!(hosts, vec![b, b, c]);
        assert!(crate::evaluation::check_constraints(&inst, &out.placement, &paths).is_feasible());
    }
}
