//! Seeded random instance generation.
//!
//! Every structural choice draws from its own ChaCha8 stream derived from
//! the seed (`ChaCha8Rng::seed_from_u64(seed)` with `set_stream(id)`), so
//! changing one parameter never perturbs draws belonging to another.
//! Stream ids are the `STREAM_*` constants below; topology retries use
//! `STREAM_TOPOLOGY + attempt`.
//!
//! Nodes are named `n0`, `n1`, … The first `num_candidates` nodes are the
//! candidates and `n0` is the gateway; the remaining nodes are transit
//! routers. NFs are named `f0`, `f1`, …, requests `r0`, `r1`, …

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{
    InstanceDoc, LinkDoc, MobilityDoc, ModelError, NetworkDoc, ProblemInstance, RequestDoc, Resources,
};

pub const STREAM_SIZES: u64 = 1;
pub const STREAM_LINK_COST: u64 = 2;
pub const STREAM_LINK_CAPACITY: u64 = 3;
pub const STREAM_NODE_RESOURCES: u64 = 4;
pub const STREAM_CATALOG: u64 = 5;
pub const STREAM_ATTACHMENT: u64 = 6;
pub const STREAM_STAY: u64 = 7;
pub const STREAM_DESTINATIONS: u64 = 8;
pub const STREAM_CHAINS: u64 = 9;
pub const STREAM_FLOW_RATES: u64 = 10;
pub const STREAM_HEADS: u64 = 11;
pub const STREAM_PLACEMENT_COST: u64 = 12;
pub const STREAM_TOPOLOGY: u64 = 1 << 32;

const TOPOLOGY_ATTEMPTS: u64 = 32;

/// Inclusive range; a single number stands for a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range<T> {
    pub min: T,
    pub max: T,
}

impl<T: Copy> Range<T> {
    pub const fn new(min: T, max: T) -> Self {
        Self { min, max }
    }

    pub const fn fixed(v: T) -> Self {
        Self { min: v, max: v }
    }
}

impl<T: Serialize + PartialEq> Serialize for Range<T> {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        if self.min == self.max {
            self.min.serialize(ser)
        } else {
            [&self.min, &self.max].serialize(ser)
        }
    }
}

impl<'de, T: DeserializeOwned + Copy> Deserialize<'de> for Range<T> {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr<T> {
            One(T),
            Two([T; 2]),
        }
        Ok(match Repr::<T>::deserialize(de).map_err(|_| {
            serde::de::Error::custom("expected a number or a [min, max] pair")
        })? {
            Repr::One(v) => Range::fixed(v),
            Repr::Two([a, b]) => Range::new(a, b),
        })
    }
}

impl<T: fmt::Display + PartialEq> fmt::Display for Range<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.min == self.max {
            write!(f, "{}", self.min)
        } else {
            write!(f, "[{}, {}]", self.min, self.max)
        }
    }
}

/// Generation parameters. Defaults follow the reference simulation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub num_candidates: Range<u32>,
    /// Degree range for candidate nodes; also the degree cap for every node.
    pub degree: Range<u32>,
    pub num_heads_per_request: Range<u32>,
    pub num_destinations: Range<u32>,
    pub batch_size: Range<u32>,
    pub catalog_size: u32,
    pub chain_length: Range<u32>,
    /// Integer link costs.
    pub link_cost: Range<u32>,
    /// Cost of hosting any NF on any candidate; 0 leaves the map empty.
    pub placement_cost: Range<f64>,
    /// GByte per candidate.
    pub node_memory: Range<f64>,
    pub node_cpu: Range<f64>,
    /// MByte per NF instance.
    pub nf_memory: Range<f64>,
    pub nf_cpu: Range<f64>,
    /// Mbps.
    pub flow_rate: Range<f64>,
    /// Mbps.
    pub link_capacity: Range<f64>,
    pub stay_probability: Range<f64>,
    /// Transit routers added on top of the candidates, as a fraction of
    /// the candidate count (rounded up).
    pub transit_fraction: f64,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            num_candidates: Range::new(20, 50),
            degree: Range::new(2, 5),
            num_heads_per_request: Range::new(1, 5),
            num_destinations: Range::new(1, 5),
            batch_size: Range::new(50, 200),
            catalog_size: 10,
            chain_length: Range::new(3, 5),
            link_cost: Range::new(1, 100),
            placement_cost: Range::fixed(0.0),
            node_memory: Range::new(8.0, 16.0),
            node_cpu: Range::fixed(32.0),
            nf_memory: Range::new(10.0, 50.0),
            nf_cpu: Range::new(0.125, 0.25),
            flow_rate: Range::new(0.064, 10.0),
            link_capacity: Range::fixed(2000.0),
            stay_probability: Range::new(0.0, 1.0),
            transit_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid parameter {field}: {message}")]
    InvalidParam { field: String, message: String },
    #[error("generation failed: {0}")]
    Unsatisfiable(String),
    #[error("generated instance is invalid: {0}")]
    Model(#[from] ModelError),
}

impl ScenarioError {
    fn param(field: &str, message: impl Into<String>) -> Self {
        Self::InvalidParam {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Maps the short sweep names onto parameter fields.
pub fn canonical_field(name: &str) -> &str {
    match name {
        "K" | "k" | "nodes" => "num_candidates",
        "R" | "requests" => "batch_size",
        "rho_o" | "rho0" | "rho_0" => "stay_probability",
        other => other,
    }
}

impl ScenarioParams {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let params: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            ScenarioError::param(&field, e.into_inner().to_string())
        })?;
        params.validate()?;
        Ok(params)
    }

    /// Overrides one field from a JSON literal (a bare word is taken as a
    /// string). Accepts the short aliases of [`canonical_field`].
    pub fn set(&mut self, field: &str, value: &str) -> Result<(), ScenarioError> {
        let field = canonical_field(field);
        let mut obj = serde_json::to_value(&*self).expect("params serialize");
        let map = obj.as_object_mut().expect("params are an object");
        if !map.contains_key(field) {
            return Err(ScenarioError::param(field, "unknown parameter"));
        }
        let parsed: serde_json::Value =
            serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        map.insert(field.to_string(), parsed);
        *self = serde_json::from_value(obj).map_err(|e| ScenarioError::param(field, e.to_string()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        fn int_range(field: &str, r: Range<u32>, lo: u32) -> Result<(), ScenarioError> {
            if r.min > r.max {
                return Err(ScenarioError::param(field, format!("min {} exceeds max {}", r.min, r.max)));
            }
            if r.min < lo {
                return Err(ScenarioError::param(field, format!("must be at least {lo}, got {}", r.min)));
            }
            Ok(())
        }
        fn real_range(field: &str, r: Range<f64>, lo: f64, positive: bool, hi: f64) -> Result<(), ScenarioError> {
            if !r.min.is_finite() || !r.max.is_finite() {
                return Err(ScenarioError::param(field, "must be finite"));
            }
            if r.min > r.max {
                return Err(ScenarioError::param(field, format!("min {} exceeds max {}", r.min, r.max)));
            }
            if r.min < lo || (positive && r.min <= 0.0) {
                let bound = if positive { "positive" } else { "non-negative" };
                return Err(ScenarioError::param(field, format!("must be {bound}, got {}", r.min)));
            }
            if r.max > hi {
                return Err(ScenarioError::param(field, format!("must be at most {hi}, got {}", r.max)));
            }
            Ok(())
        }
        int_range("num_candidates", self.num_candidates, 1)?;
        int_range("degree", self.degree, 1)?;
        int_range("num_heads_per_request", self.num_heads_per_request, 1)?;
        int_range("num_destinations", self.num_destinations, 1)?;
        int_range("batch_size", self.batch_size, 1)?;
        int_range("chain_length", self.chain_length, 1)?;
        int_range("link_cost", self.link_cost, 1)?;
        if self.catalog_size < self.chain_length.max {
            return Err(ScenarioError::param(
                "catalog_size",
                format!(
                    "chains hold distinct functions, so the catalog needs at least {} entries",
                    self.chain_length.max
                ),
            ));
        }
        real_range("placement_cost", self.placement_cost, 0.0, false, f64::INFINITY)?;
        real_range("node_memory", self.node_memory, 0.0, true, f64::INFINITY)?;
        real_range("node_cpu", self.node_cpu, 0.0, true, f64::INFINITY)?;
        real_range("nf_memory", self.nf_memory, 0.0, true, f64::INFINITY)?;
        real_range("nf_cpu", self.nf_cpu, 0.0, true, f64::INFINITY)?;
        real_range("flow_rate", self.flow_rate, 0.0, true, f64::INFINITY)?;
        real_range("link_capacity", self.link_capacity, 0.0, true, f64::INFINITY)?;
        real_range("stay_probability", self.stay_probability, 0.0, false, 1.0)?;
        if !(0.0..=10.0).contains(&self.transit_fraction) {
            return Err(ScenarioError::param("transit_fraction", "must lie in [0, 10]"));
        }
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw_int(rng: &mut ChaCha8Rng, r: Range<u32>) -> u32 {
    if r.min == r.max {
        r.min
    } else {
        rng.gen_range(r.min..=r.max)
    }
}

fn draw_real(rng: &mut ChaCha8Rng, r: Range<f64>) -> f64 {
    if r.min == r.max {
        r.min
    } else {
        rng.gen_range(r.min..=r.max)
    }
}

/// Random spanning tree plus degree augmentation. Returns sorted (u, v)
/// pairs with u < v, or None when the degree targets cannot be met.
fn build_topology(rng: &mut ChaCha8Rng, n: usize, k: usize, degree: Range<u32>) -> Option<Vec<(usize, usize)>> {
    let cap = degree.max as usize;
    let mut adj = vec![vec![false; n]; n];
    let mut deg = vec![0usize; n];
    let mut edges = Vec::new();
    let mut add = |a: usize, b: usize, adj: &mut Vec<Vec<bool>>, deg: &mut Vec<usize>| {
        adj[a][b] = true;
        adj[b][a] = true;
        deg[a] += 1;
        deg[b] += 1;
        edges.push((a.min(b), a.max(b)));
    };

    let order: Vec<usize> = sample(rng, n, n).into_vec();
    for i in 1..n {
        let v = order[i];
        let open: Vec<usize> = order[..i].iter().copied().filter(|&u| deg[u] < cap).collect();
        if open.is_empty() {
            return None;
        }
        let u = open[rng.gen_range(0..open.len())];
        add(u, v, &mut adj, &mut deg);
    }

    let targets: Vec<usize> = (0..k).map(|_| draw_int(rng, degree) as usize).collect();
    for c in sample(rng, k, k).into_vec() {
        while deg[c] < targets[c] {
            let open: Vec<usize> = (0..n).filter(|&w| w != c && !adj[c][w] && deg[w] < cap).collect();
            if open.is_empty() {
                break;
            }
            let w = open[rng.gen_range(0..open.len())];
            add(c, w, &mut adj, &mut deg);
        }
        if deg[c] < degree.min as usize {
            return None;
        }
    }
    // augmentation of later candidates never lowers an earlier degree, but
    // the cap can be met by partner choices only, so re-check the minimum
    if (0..k).any(|c| deg[c] < degree.min as usize || deg[c] > cap) {
        return None;
    }
    edges.sort_unstable();
    Some(edges)
}

/// Generates the instance document; `generate_instance` wraps it into a
/// validated [`ProblemInstance`].
pub fn generate_doc(params: &ScenarioParams, seed: u64) -> Result<InstanceDoc, ScenarioError> {
    params.validate()?;
    let mut sizes = stream(seed, STREAM_SIZES);
    let k = draw_int(&mut sizes, params.num_candidates) as usize;
    let batch = draw_int(&mut sizes, params.batch_size) as usize;
    let n = k + (k as f64 * params.transit_fraction).ceil() as usize;
    if n < 3 {
        return Err(ScenarioError::Unsatisfiable(format!(
            "{n} nodes leave no room for a gateway, an attachment and a destination"
        )));
    }

    let edges = (0..TOPOLOGY_ATTEMPTS)
        .find_map(|attempt| build_topology(&mut stream(seed, STREAM_TOPOLOGY + attempt), n, k, params.degree))
        .ok_or_else(|| {
            ScenarioError::Unsatisfiable(format!(
                "no connected graph on {n} nodes gives every candidate a degree in {}",
                params.degree
            ))
        })?;

    let name = |i: usize| format!("n{i}");
    let nodes: Vec<String> = (0..n).map(name).collect();
    let mut cost_rng = stream(seed, STREAM_LINK_COST);
    let mut cap_rng = stream(seed, STREAM_LINK_CAPACITY);
    let links: Vec<LinkDoc> = edges
        .iter()
        .map(|&(u, v)| LinkDoc {
            u: name(u),
            v: name(v),
            cost: f64::from(draw_int(&mut cost_rng, params.link_cost)),
            capacity_mbps: draw_real(&mut cap_rng, params.link_capacity),
        })
        .collect();

    let mut res_rng = stream(seed, STREAM_NODE_RESOURCES);
    let node_resources: BTreeMap<String, Resources> = (0..k)
        .map(|c| {
            let mem = draw_real(&mut res_rng, params.node_memory) * 1024.0;
            let cpu = draw_real(&mut res_rng, params.node_cpu);
            (name(c), Resources::new(mem, cpu))
        })
        .collect();

    let nf_name = |i: usize| format!("f{i}");
    let mut cat_rng = stream(seed, STREAM_CATALOG);
    let catalog: BTreeMap<String, Resources> = (0..params.catalog_size as usize)
        .map(|i| {
            let mem = draw_real(&mut cat_rng, params.nf_memory);
            let cpu = draw_real(&mut cat_rng, params.nf_cpu);
            (nf_name(i), Resources::new(mem, cpu))
        })
        .collect();

    let attachment = stream(seed, STREAM_ATTACHMENT).gen_range(1..n);
    let stay = draw_real(&mut stream(seed, STREAM_STAY), params.stay_probability);
    let mut dest_rng = stream(seed, STREAM_DESTINATIONS);
    let pool: Vec<usize> = (1..n).filter(|&v| v != attachment).collect();
    let count = (draw_int(&mut dest_rng, params.num_destinations) as usize).min(pool.len());
    let chosen: Vec<usize> = sample(&mut dest_rng, pool.len(), count).into_iter().map(|i| pool[i]).collect();
    let raw: Vec<f64> = chosen.iter().map(|_| 1.0 - dest_rng.gen::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let destinations: BTreeMap<String, f64> = chosen
        .iter()
        .zip(&raw)
        .map(|(&d, &w)| (name(d), w / total * (1.0 - stay)))
        .collect();

    let mut chain_rng = stream(seed, STREAM_CHAINS);
    let mut flow_rng = stream(seed, STREAM_FLOW_RATES);
    let mut head_rng = stream(seed, STREAM_HEADS);
    let requests: Vec<RequestDoc> = (0..batch)
        .map(|r| {
            let len = draw_int(&mut chain_rng, params.chain_length) as usize;
            let chain = sample(&mut chain_rng, params.catalog_size as usize, len)
                .into_iter()
                .map(nf_name)
                .collect();
            let flow_rate_mbps = draw_real(&mut flow_rng, params.flow_rate);
            let h = (draw_int(&mut head_rng, params.num_heads_per_request) as usize).min(k);
            let mut heads: Vec<usize> = sample(&mut head_rng, k, h).into_vec();
            heads.sort_unstable();
            RequestDoc {
                id: format!("r{r}"),
                chain,
                flow_rate_mbps,
                heads: heads.into_iter().map(name).collect(),
                head_weights: None,
            }
        })
        .collect();

    let mut placement_cost = BTreeMap::new();
    if params.placement_cost != Range::fixed(0.0) {
        let mut pc_rng = stream(seed, STREAM_PLACEMENT_COST);
        for f in catalog.keys() {
            let per_node: BTreeMap<String, f64> =
                (0..k).map(|c| (name(c), draw_real(&mut pc_rng, params.placement_cost))).collect();
            placement_cost.insert(f.clone(), per_node);
        }
    }

    Ok(InstanceDoc {
        network: NetworkDoc {
            nodes,
            links,
            candidates: (0..k).map(name).collect(),
            gateway: name(0),
            attachment: name(attachment),
            node_throughput_mbps: BTreeMap::new(),
        },
        catalog,
        node_resources,
        requests,
        placement_cost,
        mobility: MobilityDoc {
            destinations,
            stay_probability: stay,
        },
    })
}

/// Deterministic in `(params, seed)`. `params.seed` is only a default for
/// callers that do not supply their own seed.
pub fn generate_instance(params: &ScenarioParams, seed: u64) -> Result<ProblemInstance, ScenarioError> {
    Ok(ProblemInstance::new(generate_doc(params, seed)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k20() -> ScenarioParams {
        ScenarioParams {
            num_candidates: Range::fixed(20),
            batch_size: Range::fixed(20),
            ..ScenarioParams::default()
        }
    }

    #[test]
    fn k20_seed42_degrees() {
        let inst = generate_instance(&k20(), 42).unwrap();
        let net = inst.network();
        assert_eq!(net.candidates().len(), 20);
        for &c in net.candidates() {
            assert!((2..=5).contains(&net.degree(c)), "degree {}", net.degree(c));
        }
        assert!(net.is_connected());
        assert_eq!(net.name(net.gateway()), "n0");
        assert_ne!(net.attachment(), net.gateway());
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_instance(&k20(), 7).unwrap().to_json();
        let b = generate_instance(&k20(), 7).unwrap().to_json();
        assert_eq!(a, b);
        let c = generate_instance(&k20(), 8).unwrap().to_json();
        assert_ne!(a, c);
    }

    #[test]
    fn full_stay_zeroes_destinations() {
        let mut p = k20();
        p.stay_probability = Range::fixed(1.0);
        let doc = generate_doc(&p, 3).unwrap();
        assert!(!doc.mobility.destinations.is_empty());
        assert!(doc.mobility.destinations.values().all(|&w| w == 0.0));
        assert_eq!(doc.mobility.stay_probability, 1.0);
    }

    #[test]
    fn chains_are_distinct() {
        let doc = generate_doc(&k20(), 11).unwrap();
        for r in &doc.requests {
            let mut c = r.chain.clone();
            c.sort();
            c.dedup();
            assert_eq!(c.len(), r.chain.len());
            assert!((3..=5).contains(&r.chain.len()));
            assert!((1..=5).contains(&r.heads.len()));
        }
    }

    #[test]
    fn bad_range_names_field() {
        let err = ScenarioParams::from_json(r#"{"degree": [5, 2]}"#).unwrap_err();
        match err {
            ScenarioError::InvalidParam { field, .. } => assert_eq!(field, "degree"),
            other => panic!("{other}"),
        }
        let err = ScenarioParams::from_json(r#"{"flow_rate": "fast"}"#).unwrap_err();
        match err {
            ScenarioError::InvalidParam { field, .. } => assert_eq!(field, "flow_rate"),
            other => panic!("{other}"),
        }
        assert!(ScenarioParams::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn ranges_parse_scalar_or_pair() {
        let p = ScenarioParams::from_json(r#"{"num_candidates": 20, "flow_rate": [1, 2]}"#).unwrap();
        assert_eq!(p.num_candidates, Range::fixed(20));
        assert_eq!(p.flow_rate, Range::new(1.0, 2.0));
        let back: ScenarioParams = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn set_uses_aliases() {
        let mut p = ScenarioParams::default();
        p.set("rho_o", "0.25").unwrap();
        assert_eq!(p.stay_probability, Range::fixed(0.25));
        p.set("K", "[5, 6]").unwrap();
        assert_eq!(p.num_candidates, Range::new(5, 6));
        assert!(p.set("nope", "1").is_err());
        assert!(p.set("batch_size", "lots").is_err());
    }

    #[test]
    fn unsatisfiable_degree_errors() {
        let p = ScenarioParams {
            num_candidates: Range::fixed(3),
            degree: Range::fixed(4),
            transit_fraction: 0.0,
            ..ScenarioParams::default()
        };
        assert!(matches!(generate_doc(&p, 1), Err(ScenarioError::Unsatisfiable(_))));
    }

    #[test]
    fn placement_cost_is_settable() {
        let mut p = k20();
        p.placement_cost = Range::new(1.0, 2.0);
        let inst = generate_instance(&p, 5).unwrap();
        let c = inst.placement_cost(crate::model::NfIdx(0), inst.network().candidates()[0]);
        assert!((1.0..=2.0).contains(&c));
    }
}
