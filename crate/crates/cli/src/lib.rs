//! Command-line front end for `sdlc-sim`.
//!
//! Every command is a plain function over parsed arguments that writes its
//! human-readable output to a caller-supplied sink, so the binary stays a thin
//! wrapper and the commands can be driven from tests.
//!
//! Exit codes are part of the interface: see [`exit_code`].

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sdlc_sim::engine::EngineError;
use sdlc_sim::metrics::{export_timeseries, merge_replications, Report, RunStats, Summary};
use sdlc_sim::optimizer::{
    optimize, Evaluation, OptimizeOptions, OptimizerError, StabilityCriterion, DEFAULT_MAX_EVALUATIONS,
};
use sdlc_sim::scenario::{build_paper_scenario, load_scenario, load_scenario_unchecked, ScenarioConfig, ScenarioError};
use sdlc_sim::workflow::{run_replications_with, SimulationOptions, WorkflowError};
use serde::Serialize;
use thiserror::Error;

mod table;

pub use table::summary_table;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_REPLICATIONS: u32 = 5;

/// Process exit codes.
pub mod exit_code {
    pub const OK: i32 = 0;
    /// Unreadable, malformed or invalid input; IO failure on output.
    pub const CONFIG: i32 = 1;
    /// The event list drained while projects were still blocked.
    pub const NO_PROGRESS: i32 = 2;
    /// The optimizer ran out of evaluations without finding a stable vector.
    pub const BUDGET_EXHAUSTED: i32 = 3;
}

#[derive(Debug, Parser)]
#[command(name = "sdlc-sim", version, about = "Discrete-event simulation of Waterfall software projects")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the built-in reference scenario (5 replications × 50 projects by default).
    Paper {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run replications of a scenario and write report.json and timeseries.csv.
    Run {
        #[command(flatten)]
        source: ScenarioSource,
        #[command(flatten)]
        common: CommonArgs,
        /// Skip the demand-versus-capacity check. Oversized requests then queue
        /// forever and the run ends with exit code 2.
        #[arg(long)]
        no_validate: bool,
    },
    /// Check a scenario file without running it. Never writes files.
    Validate {
        #[command(flatten)]
        source: ScenarioSource,
    },
    /// Re-run a scenario for each value of one numeric parameter.
    Sweep {
        #[command(flatten)]
        source: ScenarioSource,
        #[command(flatten)]
        common: CommonArgs,
        /// Dot path of the parameter, e.g. `pools.programmers.capacity`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
    /// Search for the smallest stable pool capacities.
    Optimize {
        #[command(flatten)]
        source: ScenarioSource,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        criterion: CriterionArgs,
    },
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct ScenarioSource {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Use the built-in reference scenario instead of a file.
    #[arg(long)]
    pub paper_scenario: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Master seed [default: the scenario's `seed`, else 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of replications [default: the scenario's `replications`, else 5].
    /// For `optimize`, replications per candidate evaluation.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub replications: Option<u32>,
    /// Projects per replication (overrides `project_limit`).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub projects: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Run replications on all cores. Outputs are identical either way.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CriterionArgs {
    /// Allowed relative excess of the delivery gap over the arrival gap.
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    /// Largest acceptable mean queue wait per pool, in days.
    #[arg(long, default_value_t = 1.0)]
    pub max_wait: f64,
    /// Maximum number of distinct capacity vectors to simulate.
    #[arg(long, default_value_t = DEFAULT_MAX_EVALUATIONS)]
    pub budget: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    NoProgress(String),
    #[error("{0}")]
    BudgetExhausted(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => exit_code::CONFIG,
            CliError::NoProgress(_) => exit_code::NO_PROGRESS,
            CliError::BudgetExhausted(_) => exit_code::BUDGET_EXHAUSTED,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Validation(issues) => CliError::Config(format!(
                "invalid scenario:\n{}",
                issues.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n")
            )),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<WorkflowError> for CliError {
    fn from(e: WorkflowError) -> Self {
        match e {
            WorkflowError::Engine(EngineError::NoProgress { in_system, blocked }) => CliError::NoProgress(format!(
                "no progress: {in_system} project(s) still in the system and nothing scheduled\n{}",
                blocked.iter().map(|b| format!("  {b}")).collect::<Vec<_>>().join("\n")
            )),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(io_err(format!("writing {}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))
}

/// Parses and dispatches; returns the process exit code. Errors are
/// reported on `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit_code::CONFIG } else { exit_code::OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{rendered}") } else { write!(out, "{rendered}") };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => exit_code::OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Paper { common } => cmd_paper(common, out).map(drop),
        Command::Run {
            source,
            common,
            no_validate,
        } => {
            let config = source.load(!no_validate)?;
            cmd_run(&config, common, *no_validate, out).map(drop)
        }
        Command::Validate { source } => cmd_validate(source, out),
        Command::Sweep {
            source,
            common,
            param,
            values,
        } => {
            let config = source.load(true)?;
            cmd_sweep(&config, common, param, values, out).map(drop)
        }
        Command::Optimize {
            source,
            common,
            criterion,
        } => {
            let config = source.load(true)?;
            cmd_optimize(&config, common, criterion, out).map(drop)
        }
    }
}

impl ScenarioSource {
    pub fn load(&self, validate: bool) -> Result<ScenarioConfig, CliError> {
        let Some(path) = &self.scenario else {
            return Ok(build_paper_scenario());
        };
        let text = std::fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
        let parsed = if validate {
            load_scenario(&text)
        } else {
            load_scenario_unchecked(&text)
        };
        parsed.map_err(|e| match CliError::from(e) {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Seed and replication count after applying flag > scenario file > default.
pub fn resolve_run(config: &ScenarioConfig, common: &CommonArgs) -> (ScenarioConfig, u64, u32) {
    let seed = common.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
    let replications = common.replications.or(config.replications).unwrap_or(DEFAULT_REPLICATIONS);
    let config = match common.projects {
        Some(n) => config.with_project_limit(n),
        None => config.clone(),
    };
    (config, seed, replications)
}

/// Runs the replications and writes `report.json` and `timeseries.csv`
/// (replication 0) into the output directory.
pub fn cmd_run(
    config: &ScenarioConfig,
    common: &CommonArgs,
    allow_infeasible: bool,
    out: &mut dyn Write,
) -> Result<Report, CliError> {
    let (config, seed, replications) = resolve_run(config, common);
    let options = SimulationOptions {
        allow_infeasible,
        ..Default::default()
    };
    let stats = run_replications_with(&config, seed, u64::from(replications), common.parallel, options)?;
    let report = merge_replications(&config, seed, &stats).map_err(|e| CliError::Config(e.to_string()))?;
    ensure_dir(&common.out)?;
    write_file(&common.out.join("report.json"), &report.to_json())?;
    write_file(&common.out.join("timeseries.csv"), &export_timeseries(&stats[0].pools))?;
    write!(out, "{}", summary_table(&report)).map_err(io_err("writing summary"))?;
    writeln!(out, "wrote {}", common.out.display()).map_err(io_err("writing summary"))?;
    Ok(report)
}

pub fn cmd_paper(common: &CommonArgs, out: &mut dyn Write) -> Result<Report, CliError> {
    cmd_run(&build_paper_scenario(), common, false, out)
}

pub fn cmd_validate(source: &ScenarioSource, out: &mut dyn Write) -> Result<(), CliError> {
    let config = source.load(true)?;
    writeln!(
        out,
        "ok: {} pools, {} classes, {} phases, {} projects",
        config.pools.len(),
        config.classes.len(),
        config.phases.len(),
        config.project_limit
    )
    .map_err(io_err("writing output"))
}

/// One CSV row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub replication: u64,
    /// `ok`, or `invalid` when the value makes the scenario invalid.
    pub status: &'static str,
    pub stats: Option<RunStats>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn sweep_csv(config: &ScenarioConfig, rows: &[SweepRow]) -> String {
    let mut csv = String::from("value,replication,status,received,delivered,arrival_art,delivery_art,horizon");
    for pool in &config.pools {
        write!(csv, ",{0}_utilization,{0}_mean_wait", pool.name).expect("writing to a String");
    }
    csv.push('\n');
    for row in rows {
        write!(csv, "{},{},{}", row.value, row.replication, row.status).expect("writing to a String");
        match &row.stats {
            Some(s) => {
                let summary = s.summary();
                write!(
                    csv,
                    ",{},{},{},{},{:.6}",
                    s.received(),
                    s.delivered(),
                    opt(s.arrival_art()),
                    opt(s.delivery_art()),
                    s.horizon
                )
                .expect("writing to a String");
                for p in &summary.pools {
                    write!(csv, ",{:.6},{:.6}", p.utilization, p.mean_wait).expect("writing to a String");
                }
            }
            None => csv.push_str(&",".repeat(5 + 2 * config.pools.len())),
        }
        csv.push('\n');
    }
    csv
}

/// Runs every value with the same seed (common random numbers across values)
/// and writes `sweep.csv`. Values that make the scenario invalid yield
/// `invalid` rows; an unknown parameter path fails the whole sweep.
pub fn cmd_sweep(
    config: &ScenarioConfig,
    common: &CommonArgs,
    param: &str,
    values: &[f64],
    out: &mut dyn Write,
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("--values: empty value list".into()));
    }
    let (base, seed, replications) = resolve_run(config, common);
    let mut rows = Vec::new();
    for &value in values {
        let candidate = match base.with_parameter(param, value) {
            Ok(c) => c,
            Err(ScenarioError::Validation(issues)) => {
                let why = issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
                writeln!(out, "{param} = {value}: invalid ({why})").map_err(io_err("writing output"))?;
                rows.extend((0..u64::from(replications)).map(|replication| SweepRow {
                    value,
                    replication,
                    status: "invalid",
                    stats: None,
                }));
                continue;
            }
            Err(other) => return Err(CliError::Config(format!("--param: {other}"))),
        };
        let stats = run_replications_with(
            &candidate,
            seed,
            u64::from(replications),
            common.parallel,
            SimulationOptions::default(),
        )?;
        let delivery = Summary::of(stats.iter().map(RunStats::delivery_art));
        writeln!(out, "{param} = {value}: mean delivery ArT {}", opt(delivery.mean)).map_err(io_err("writing output"))?;
        rows.extend(stats.into_iter().map(|s| SweepRow {
            value,
            replication: s.replication,
            status: "ok",
            stats: Some(s),
        }));
    }
    ensure_dir(&common.out)?;
    write_file(&common.out.join("sweep.csv"), &sweep_csv(&base, &rows))?;
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct OptimizationFile<'a> {
    tool_version: &'static str,
    seed: u64,
    criterion: StabilityCriterion,
    max_evaluations: usize,
    status: &'static str,
    pools: Vec<&'a str>,
    capacities: Option<Vec<u32>>,
    total_simulated_projects: u64,
    evaluations: &'a [Evaluation],
}

/// Runs the capacity search and writes `optimization.json` (also on budget
/// exhaustion, with the full evaluation log).
pub fn cmd_optimize(
    config: &ScenarioConfig,
    common: &CommonArgs,
    args: &CriterionArgs,
    out: &mut dyn Write,
) -> Result<Vec<u32>, CliError> {
    let defaults = StabilityCriterion::default();
    let criterion = StabilityCriterion {
        epsilon: args.epsilon,
        max_wait: args.max_wait,
        replications: common.replications.map_or(defaults.replications, u64::from),
        projects_per_rep: common.projects.unwrap_or(defaults.projects_per_rep),
    };
    let seed = common.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
    let options = OptimizeOptions {
        max_evaluations: args.budget,
        parallel: common.parallel,
    };
    let pools: Vec<&str> = config.pools.iter().map(|p| p.name.as_str()).collect();
    let write_json = |status, capacities, evaluations: &[Evaluation]| -> Result<(), CliError> {
        let file = OptimizationFile {
            tool_version: env!("CARGO_PKG_VERSION"),
            seed,
            criterion,
            max_evaluations: args.budget,
            status,
            pools: pools.clone(),
            capacities,
            total_simulated_projects: evaluations.iter().map(|e| e.simulated_projects).sum(),
            evaluations,
        };
        let mut json = serde_json::to_string_pretty(&file).expect("optimization result serializes");
        json.push('\n');
        ensure_dir(&common.out)?;
        write_file(&common.out.join("optimization.json"), &json)
    };
    let w = io_err("writing output");

    match optimize(config, &criterion, seed, options) {
        Ok(result) => {
            write_json("optimal", Some(result.capacities.clone()), &result.evaluations)?;
            let mut text = String::new();
            writeln!(text, "evaluations ({}):", result.evaluations.len()).expect("writing to a String");
            for e in &result.evaluations {
                let verdict = if e.pass { "pass".to_string() } else { format!("fail: {}", e.reasons.join("; ")) };
                writeln!(text, "  {:?} {verdict}", e.capacities).expect("writing to a String");
            }
            let best = result.optimum();
            writeln!(text, "optimal capacities:").expect("writing to a String");
            for (p, name) in pools.iter().enumerate() {
                write!(text, "  {name:<14} {:>4}", result.capacities[p]).expect("writing to a String");
                if let Some(m) = &best.metrics {
                    write!(text, "   utilization {:.3}   mean wait {:.3} d", m.utilization[p], m.mean_wait[p])
                        .expect("writing to a String");
                }
                text.push('\n');
            }
            if let Some(m) = &best.metrics {
                writeln!(
                    text,
                    "arrival ArT {}  delivery ArT {}  ({} projects simulated)",
                    opt(m.arrival_art),
                    opt(m.delivery_art),
                    result.total_simulated_projects
                )
                .expect("writing to a String");
            }
            out.write_all(text.as_bytes()).map_err(w)?;
            Ok(result.capacities)
        }
        Err(OptimizerError::BudgetExhausted {
            max_evaluations,
            evaluations,
        }) => {
            write_json("budget_exhausted", None, &evaluations)?;
            Err(CliError::BudgetExhausted(format!(
                "no stable capacity vector within {max_evaluations} evaluations; log written to {}",
                common.out.join("optimization.json").display()
            )))
        }
        Err(e) => Err(CliError::Config(e.to_string())),
    }
}
