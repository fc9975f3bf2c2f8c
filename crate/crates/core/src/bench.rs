//! Monte-Carlo sweeps over one scenario parameter.
//!
//! Each (axis value, trial) pair generates one instance that every
//! algorithm solves, so comparisons are paired. Trials run in parallel and
//! are sorted before aggregation, so output does not depend on the number
//! of workers.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::gain;
use crate::exact::{is_desk_scale, solve_exact, Budget, ProofStatus};
use crate::graph::PathTable;
use crate::heuristics::{agw, ppcc, spba};
use crate::model::ProblemInstance;
use crate::scenario::{canonical_field, generate_instance, ScenarioError, ScenarioParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Exact,
    Ppcc,
    Spba,
    Agw,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Exact, Algorithm::Ppcc, Algorithm::Spba, Algorithm::Agw];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Exact => "exact",
            Algorithm::Ppcc => "ppcc",
            Algorithm::Spba => "spba",
            Algorithm::Agw => "agw",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| BenchError::Sweep(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("exact search is limited to desk-scale instances; value {value} trial {trial} is larger")]
    ExactTooLarge { value: f64, trial: u32 },
    #[error("result table is empty")]
    EmptyTable,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One swept parameter and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    /// Canonical parameter name.
    pub axis: String,
    pub values: Vec<f64>,
}

fn round_nano(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

impl FromStr for Sweep {
    type Err = BenchError;

    /// `axis=start:step:stop` (inclusive) or `axis=v1,v2,...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |m: &str| BenchError::Sweep(format!("{s:?}: {m}"));
        let (axis, spec) = s.split_once('=').ok_or_else(|| bad("expected axis=values"))?;
        let axis = canonical_field(axis.trim()).to_string();
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad(&format!("{t:?} is not a number")));
        let values = if spec.contains(':') {
            let parts: Vec<&str> = spec.split(':').collect();
            if parts.len() != 3 {
                return Err(bad("ranges take the form start:step:stop"));
            }
            let (a, step, b) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(step > 0.0) || b < a || !a.is_finite() || !b.is_finite() {
                return Err(bad("need a positive step and start <= stop"));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| round_nano(a + i as f64 * step)).collect()
        } else {
            spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?
        };
        if values.is_empty() {
            return Err(bad("no values"));
        }
        Ok(Sweep { axis, values })
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub base: ScenarioParams,
    pub trials: u32,
    pub algorithms: Vec<Algorithm>,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    /// Record wall-clock runtimes. Disable for byte-reproducible output.
    pub timing: bool,
    pub budget: Budget,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            base: ScenarioParams::default(),
            trials: 100,
            algorithms: vec![Algorithm::Ppcc, Algorithm::Spba, Algorithm::Agw],
            jobs: 0,
            timing: true,
            budget: Budget::default(),
        }
    }
}

/// Per-trial, per-algorithm outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub axis: String,
    pub value: f64,
    pub trial: u32,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub feasible: bool,
    pub total: Option<f64>,
    pub placement_term: Option<f64>,
    pub head_hop_term: Option<f64>,
    pub chain_hop_term: Option<f64>,
    pub tail_hop_term: Option<f64>,
    pub gain_vs_spba: Option<f64>,
    pub gain_vs_agw: Option<f64>,
    pub runtime_ms: Option<f64>,
}

/// Aggregate over the trials of one (value, algorithm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub axis: String,
    pub value: f64,
    pub algorithm: Algorithm,
    pub mean_cost: Option<f64>,
    pub stderr_cost: Option<f64>,
    pub mean_gain_vs_spba: Option<f64>,
    pub mean_gain_vs_agw: Option<f64>,
    pub infeasible_count: u32,
    pub mean_runtime_ms: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub trials: Vec<TrialRecord>,
}

impl ResultTable {
    pub fn row(&self, value: f64, algorithm: Algorithm) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.value == value && r.algorithm == algorithm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one trial; independent of the other axis values and trials.
pub fn trial_seed(base_seed: u64, value: f64, trial: u32) -> u64 {
    splitmix(splitmix(splitmix(base_seed) ^ value.to_bits()) ^ u64::from(trial))
}

fn axis_literal(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let se = if xs.len() < 2 {
        0.0
    } else {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Some((mean, se))
}

struct Solved {
    algorithm: Algorithm,
    feasible: bool,
    report: Option<crate::evaluation::CostReport>,
    runtime_ms: f64,
}

fn run_one(inst: &ProblemInstance, paths: &PathTable, algo: Algorithm, budget: Budget) -> Solved {
    let start = Instant::now();
    let (feasible, report) = match algo {
        Algorithm::Exact => {
            let out = solve_exact(inst, paths, budget);
            (out.status == ProofStatus::Optimal, out.cost)
        }
        Algorithm::Ppcc => {
            let out = ppcc(inst, paths).expect("stored paths");
            (out.fully_placed(), Some(out.cost))
        }
        Algorithm::Spba => {
            let out = spba(inst, paths).expect("stored paths");
            (out.fully_placed(), Some(out.cost))
        }
        Algorithm::Agw => (true, Some(agw(inst, paths).expect("stored paths").1)),
    };
    Solved {
        algorithm: algo,
        feasible,
        report,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

fn run_trial(sweep: &Sweep, value: f64, trial: u32, cfg: &BenchConfig) -> Result<Vec<TrialRecord>, BenchError> {
    let mut params = cfg.base.clone();
    params.set(&sweep.axis, &axis_literal(value))?;
    params.validate()?;
    let seed = trial_seed(cfg.base.seed, value, trial);
    let inst = generate_instance(&params, seed)?;
    if cfg.algorithms.contains(&Algorithm::Exact) && !is_desk_scale(&inst) {
        return Err(BenchError::ExactTooLarge { value, trial });
    }

    let mut wanted = cfg.algorithms.clone();
    for reference in [Algorithm::Spba, Algorithm::Agw] {
        if !wanted.contains(&reference) {
            wanted.push(reference);
        }
    }
    let paths = inst.path_table().expect("generated instances are connected");
    let solved: Vec<Solved> = wanted.iter().map(|&a| run_one(&inst, &paths, a, cfg.budget)).collect();
    let feasible_total = |a: Algorithm| {
        solved
            .iter()
            .find(|s| s.algorithm == a)
            .filter(|s| s.feasible)
            .and_then(|s| s.report.as_ref())
            .map(|r| r.total)
    };
    let spba_total = feasible_total(Algorithm::Spba);
    let agw_total = feasible_total(Algorithm::Agw);

    Ok(solved
        .iter()
        .filter(|s| cfg.algorithms.contains(&s.algorithm))
        .map(|s| {
            let rep = s.report.as_ref().filter(|_| s.feasible);
            let rel = |reference: Option<f64>| match (rep, reference) {
                (Some(r), Some(b)) => gain(r.total, b).ok(),
                _ => None,
            };
            TrialRecord {
                axis: sweep.axis.clone(),
                value,
                trial,
                seed,
                algorithm: s.algorithm,
                feasible: s.feasible,
                total: rep.map(|r| r.total),
                placement_term: rep.map(|r| r.placement_term),
                head_hop_term: rep.map(|r| r.head_hop_term),
                chain_hop_term: rep.map(|r| r.chain_hop_term),
                tail_hop_term: rep.map(|r| r.tail_hop_term),
                gain_vs_spba: rel(spba_total),
                gain_vs_agw: rel(agw_total),
                runtime_ms: cfg.timing.then_some(s.runtime_ms),
            }
        })
        .collect())
}

fn aggregate(axis: &str, value: f64, algorithm: Algorithm, records: &[&TrialRecord]) -> ResultRow {
    let collect = |f: fn(&TrialRecord) -> Option<f64>| -> Vec<f64> { records.iter().filter_map(|r| f(r)).collect() };
    let costs = collect(|r| r.total);
    let mean = |xs: Vec<f64>| mean_stderr(&xs).map(|(m, _)| m);
    let stats = mean_stderr(&costs);
    ResultRow {
        axis: axis.to_string(),
        value,
        algorithm,
        mean_cost: stats.map(|(m, _)| m),
        stderr_cost: stats.map(|(_, s)| s),
        mean_gain_vs_spba: mean(collect(|r| r.gain_vs_spba)),
        mean_gain_vs_agw: mean(collect(|r| r.gain_vs_agw)),
        infeasible_count: records.iter().filter(|r| !r.feasible).count() as u32,
        mean_runtime_ms: mean(collect(|r| r.runtime_ms)),
    }
}

/// Runs `cfg.trials` paired trials per axis value. Fully determined by
/// `cfg.base.seed`, the sweep and the algorithm list.
pub fn run_sweep(sweep: &Sweep, cfg: &BenchConfig) -> Result<ResultTable, BenchError> {
    if cfg.trials == 0 {
        return Err(BenchError::Sweep("trials must be at least 1".into()));
    }
    if cfg.algorithms.is_empty() {
        return Err(BenchError::Sweep("no algorithms selected".into()));
    }
    let mut algorithms = cfg.algorithms.clone();
    algorithms.sort();
    algorithms.dedup();
    let cfg = BenchConfig {
        algorithms,
        ..cfg.clone()
    };

    let jobs: Vec<(usize, u32)> = (0..sweep.values.len())
        .flat_map(|v| (0..cfg.trials).map(move |t| (v, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| BenchError::Sweep(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<TrialRecord>, BenchError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(v, t)| run_trial(sweep, sweep.values[v], t, &cfg))
            .collect()
    });
    let mut trials = Vec::new();
    for r in results {
        trials.extend(r?);
    }

    let mut rows = Vec::new();
    for &value in &sweep.values {
        for &algo in &cfg.algorithms {
            let recs: Vec<&TrialRecord> = trials.iter().filter(|r| r.value == value && r.algorithm == algo).collect();
            rows.push(aggregate(&sweep.axis, value, algo, &recs));
        }
    }
    Ok(ResultTable { rows, trials })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const CSV_COLUMNS: [&str; 9] = [
    "axis",
    "value",
    "algorithm",
    "mean_cost",
    "stderr_cost",
    "mean_gain_vs_spba",
    "mean_gain_vs_agw",
    "infeasible_count",
    "mean_runtime_ms",
];

/// Aggregated rows as CSV text.
pub fn results_csv(table: &ResultTable) -> Result<String, BenchError> {
    if table.rows.is_empty() {
        return Err(BenchError::EmptyTable);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in &table.rows {
        w.write_record([
            r.axis.clone(),
            r.value.to_string(),
            r.algorithm.to_string(),
            opt(r.mean_cost),
            opt(r.stderr_cost),
            opt(r.mean_gain_vs_spba),
            opt(r.mean_gain_vs_agw),
            r.infeasible_count.to_string(),
            opt(r.mean_runtime_ms),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

/// Per-trial records as CSV text.
pub fn trials_csv(table: &ResultTable) -> Result<String, BenchError> {
    if table.trials.is_empty() {
        return Err(BenchError::EmptyTable);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in &table.trials {
        w.serialize(t)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

/// `(x, mean, stderr)` triplets per algorithm for external plotting.
pub fn plot_data(table: &ResultTable) -> Result<String, BenchError> {
    if table.rows.is_empty() {
        return Err(BenchError::EmptyTable);
    }
    let mut out = String::new();
    let mut algos: Vec<Algorithm> = table.rows.iter().map(|r| r.algorithm).collect();
    algos.sort();
    algos.dedup();
    for a in algos {
        out.push_str(&format!("# {a}\n"));
        for r in table.rows.iter().filter(|r| r.algorithm == a) {
            out.push_str(&format!("{} {} {}\n", r.value, opt(r.mean_cost), opt(r.stderr_cost)));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_results(table: &ResultTable, format: Format, path: &Path) -> Result<(), BenchError> {
    let text = match format {
        Format::Csv => results_csv(table)?,
        Format::Json => {
            if table.rows.is_empty() {
                return Err(BenchError::EmptyTable);
            }
            let mut s = serde_json::to_string_pretty(&table.rows)?;
            s.push('\n');
            s
        }
    };
    std::fs::write(path, text)?;
    Ok(())
}
