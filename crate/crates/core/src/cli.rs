//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 infeasible,
//! 4 search budget exhausted. Failures print a JSON object on stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bench::{plot_data, results_csv, run_sweep, trials_csv, Algorithm, BenchConfig, BenchError, Sweep};
use crate::evaluation::{CapacityModel, CostReport};
use crate::exact::{export_lp, solve_exact, Budget, ProofStatus};
use crate::heuristics::{agw, ppcc_with, spba_with, HeuristicOptions};
use crate::model::{parse_json, InstanceDoc, ModelError, PlacementDoc, ProblemInstance};
use crate::scenario::{generate_doc, ScenarioError, ScenarioParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;
/// I/O and other environment failures.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Parser, Debug)]
#[command(name = "pcc", version, about = "Mobility-aware VNF chain placement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random instance.
    Generate(GenerateArgs),
    /// Solve an instance with one algorithm.
    Solve(SolveArgs),
    /// Run a Monte-Carlo sweep.
    Bench(BenchArgs),
    /// Write the integer program in LP format.
    ExportLp(ExportArgs),
    /// Check an instance file.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Scenario parameter file (JSON).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Parameter override, e.g. `--set batch_size=100` or `--set K=[20,30]`.
    #[arg(long = "set", value_name = "FIELD=VALUE")]
    overrides: Vec<String>,
    /// Seed; overrides the seed in the parameter file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum AlgoArg {
    Exact,
    Ppcc,
    Spba,
    Agw,
}

#[derive(Args, Debug)]
struct BudgetArgs {
    /// Node-expansion limit for exact search.
    #[arg(long, default_value_t = Budget::default().max_nodes_expanded)]
    max_nodes: u64,
    /// Wall-clock limit for exact search, in seconds.
    #[arg(long, default_value_t = Budget::default().wall_time.as_secs_f64())]
    time_limit: f64,
}

impl BudgetArgs {
    fn budget(&self) -> Result<Budget, CliError> {
        if !(self.time_limit >= 0.0) || !self.time_limit.is_finite() {
            return Err(CliError::usage("--time-limit must be a non-negative number of seconds"));
        }
        Ok(Budget {
            max_nodes_expanded: self.max_nodes,
            wall_time: Duration::from_secs_f64(self.time_limit),
        })
    }
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    algo: AlgoArg,
    /// Result file (placement and cost report); not written when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Heuristic cost per unhosted chain position; defaults to twice the
    /// longest shortest-path cost.
    #[arg(long)]
    penalty: Option<f64>,
    /// Capacity bookkeeping for the greedy heuristics.
    #[arg(long, value_enum, default_value_t = CapacityArg::PerPair)]
    capacity: CapacityArg,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum CapacityArg {
    PerPair,
    PerLink,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Swept parameter, `axis=start:step:stop` or `axis=v1,v2,...`.
    #[arg(long)]
    sweep: String,
    #[arg(long, default_value_t = 100)]
    trials: u32,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated algorithms.
    #[arg(long, value_delimiter = ',', default_value = "ppcc,spba,agw")]
    algos: Vec<AlgoArg>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Leave runtimes out so output files are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    budget: BudgetArgs,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Instance file.
    #[arg(long = "instance", value_name = "FILE")]
    flag: Option<PathBuf>,
    /// Instance file, as a positional argument.
    #[arg(value_name = "INSTANCE", conflicts_with = "flag")]
    positional: Option<PathBuf>,
}

#[derive(Debug)]
struct CliError {
    code: i32,
    body: Value,
}

impl CliError {
    fn new(code: i32, kind: &str, message: impl Into<String>) -> Self {
        Self {
            code,
            body: json!({ "error": kind, "message": message.into() }),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, "usage", message)
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        let mut e = Self::new(EXIT_FAILURE, "io", format!("{}: {err}", path.display()));
        e.body["file"] = json!(path.display().to_string());
        e
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let mut err = CliError::new(EXIT_USAGE, "invalid_instance", e.to_string());
        match &e {
            ModelError::Parse { path, .. } => err.body["path"] = json!(path),
            ModelError::Invalid(v) => err.body["violations"] = json!(v),
            _ => {}
        }
        err
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        let mut err = CliError::new(EXIT_USAGE, "invalid_params", e.to_string());
        if let ScenarioError::InvalidParam { field, .. } = &e {
            err.body["field"] = json!(field);
        }
        err
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Scenario(s) => s.into(),
            BenchError::Io(io) => CliError::new(EXIT_FAILURE, "io", io.to_string()),
            other => CliError::new(EXIT_USAGE, "bench", other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn load_instance(path: &Path) -> Result<ProblemInstance, CliError> {
    Ok(ProblemInstance::from_json(&read(path)?)?)
}

fn scenario_params(args: &ScenarioArgs) -> Result<ScenarioParams, CliError> {
    let mut params = match &args.params {
        Some(p) => ScenarioParams::from_json(&read(p)?)?,
        None => ScenarioParams::default(),
    };
    for o in &args.overrides {
        let (field, value) = o
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects FIELD=VALUE, got {o:?}")))?;
        params.set(field.trim(), value.trim())?;
    }
    if let Some(seed) = args.seed {
        params.seed = seed;
    }
    params.validate()?;
    Ok(params)
}

fn emit(out: &mut dyn Write, path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write(p, text),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn generate(args: GenerateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let params = scenario_params(&args.scenario)?;
    let doc = generate_doc(&params, params.seed)?;
    let inst = ProblemInstance::new(doc).map_err(ScenarioError::from)?;
    emit(out, args.out.as_deref(), &inst.to_json())?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct UnplacedDoc<'a> {
    request: &'a str,
    /// 1-based chain position.
    position: usize,
    nf: &'a str,
}

#[derive(Serialize)]
struct SolveDoc<'a> {
    algorithm: &'static str,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    placement: Option<PlacementDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cost: Option<CostReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    unplaced: Vec<UnplacedDoc<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes_expanded: Option<u64>,
}

fn solve(args: SolveArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let inst = load_instance(&args.instance)?;
    let paths = inst.path_table().map_err(ModelError::from)?;
    let opts = HeuristicOptions {
        penalty: args.penalty,
        capacity: match args.capacity {
            CapacityArg::PerPair => CapacityModel::PerPair,
            CapacityArg::PerLink => CapacityModel::PerLink,
        },
    };
    if let Some(p) = args.penalty {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(CliError::usage("--penalty must be a non-negative number"));
        }
    }
    let eval_err = |e: crate::evaluation::EvalError| CliError::new(EXIT_FAILURE, "evaluation", e.to_string());

    let (doc, code) = match args.algo {
        AlgoArg::Exact => {
            let res = solve_exact(&inst, &paths, args.budget.budget()?);
            let (status, code) = match res.status {
                ProofStatus::Optimal => ("optimal", EXIT_OK),
                ProofStatus::Infeasible => ("infeasible", EXIT_INFEASIBLE),
                ProofStatus::BudgetExceeded => ("budget_exceeded", EXIT_BUDGET),
            };
            let doc = SolveDoc {
                algorithm: "exact",
                status,
                placement: res.placement.as_ref().map(|p| p.to_doc(&inst)),
                cost: res.cost,
                unplaced: Vec::new(),
                nodes_expanded: Some(res.nodes_expanded),
            };
            (doc, code)
        }
        AlgoArg::Ppcc | AlgoArg::Spba => {
            let (name, res) = if args.algo == AlgoArg::Ppcc {
                ("ppcc", ppcc_with(&inst, &paths, opts).map_err(eval_err)?)
            } else {
                ("spba", spba_with(&inst, &paths, opts).map_err(eval_err)?)
            };
            let unplaced = res
                .unplaced
                .iter()
                .map(|u| UnplacedDoc {
                    request: &inst.request(u.request).id,
                    position: u.position + 1,
                    nf: inst.nf_name(u.nf),
                })
                .collect::<Vec<_>>();
            let doc = SolveDoc {
                algorithm: name,
                status: if unplaced.is_empty() { "placed" } else { "partial" },
                placement: Some(res.placement.to_doc(&inst)),
                cost: Some(res.cost),
                unplaced,
                nodes_expanded: None,
            };
            (doc, EXIT_OK)
        }
        AlgoArg::Agw => {
            let (p, cost) = agw(&inst, &paths).map_err(eval_err)?;
            let doc = SolveDoc {
                algorithm: "agw",
                status: "placed",
                placement: Some(p.to_doc(&inst)),
                cost: Some(cost),
                unplaced: Vec::new(),
                nodes_expanded: None,
            };
            (doc, EXIT_OK)
        }
    };

    if let Some(path) = &args.out {
        let mut text = serde_json::to_string_pretty(&doc).expect("result serializes");
        text.push('\n');
        write(path, &text)?;
    }
    match (code, doc.cost) {
        (EXIT_INFEASIBLE, _) => Err(CliError::new(EXIT_INFEASIBLE, "infeasible", "no placement satisfies the constraints")),
        (EXIT_BUDGET, cost) => {
            let mut e = CliError::new(EXIT_BUDGET, "budget_exceeded", "search budget exhausted before optimality was proven");
            if let Some(c) = cost {
                e.body["incumbent_total"] = json!(c.total);
            }
            Err(e)
        }
        (_, Some(cost)) => {
            writeln!(out, "{}", cost.total).map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
            Ok(code)
        }
        (_, None) => unreachable!("successful solves carry a cost"),
    }
}

fn bench(args: BenchArgs) -> Result<i32, CliError> {
    let sweep: Sweep = args.sweep.parse()?;
    let base = scenario_params(&args.scenario)?;
    let algorithms = args
        .algos
        .iter()
        .map(|a| match a {
            AlgoArg::Exact => Algorithm::Exact,
            AlgoArg::Ppcc => Algorithm::Ppcc,
            AlgoArg::Spba => Algorithm::Spba,
            AlgoArg::Agw => Algorithm::Agw,
        })
        .collect();
    let cfg = BenchConfig {
        base,
        trials: args.trials,
        algorithms,
        jobs: args.jobs,
        timing: !args.no_timing,
        budget: args.budget.budget()?,
    };
    let table = run_sweep(&sweep, &cfg)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    match args.format {
        FormatArg::Csv => write(&args.out.join("results.csv"), &results_csv(&table)?)?,
        FormatArg::Json => {
            crate::bench::emit_results(&table, crate::bench::Format::Json, &args.out.join("results.json"))?
        }
    }
    write(&args.out.join("trials.csv"), &trials_csv(&table)?)?;
    write(&args.out.join("plot.dat"), &plot_data(&table)?)?;
    Ok(EXIT_OK)
}

fn export(args: ExportArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let inst = load_instance(&args.instance)?;
    let paths = inst.path_table().map_err(ModelError::from)?;
    let lp = export_lp(&inst, &paths).map_err(|e| CliError::new(EXIT_USAGE, "export", e.to_string()))?;
    emit(out, args.out.as_deref(), &lp)?;
    Ok(EXIT_OK)
}

fn validate(args: ValidateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let path = args
        .flag
        .or(args.positional)
        .ok_or_else(|| CliError::usage("validate needs an instance file"))?;
    let doc: InstanceDoc = parse_json(&read(&path)?)?;
    ProblemInstance::new(doc)?;
    writeln!(out, "{}", json!({ "valid": true })).map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    Ok(EXIT_OK)
}

/// Runs the CLI with explicit argument list and output streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = out.write_all(text.as_bytes());
            } else {
                let _ = writeln!(err, "{}", json!({ "error": "usage", "message": text.trim_end() }));
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a, out),
        Command::Solve(a) => solve(a, out),
        Command::Bench(a) => bench(a),
        Command::ExportLp(a) => export(a, out),
        Command::Validate(a) => validate(a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "{}", e.body);
            e.code
        }
    }
}

pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
