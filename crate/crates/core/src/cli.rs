//! Command-line front end.
//!
//! Every artifact is JSON written with a trailing newline, and every random
//! choice derives from an explicit `--seed`, so rerunning a command with the
//! same arguments rewrites identical bytes.
//!
//! Exit codes: 0 on success, 1 when a check fails or a computation errors,
//! 2 for usage errors, bad input files and out-of-range parameters.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::engine::{Algorithm, AlgorithmConfig, ApxBranch, PreparedAlgorithm};
use crate::error::Error;
use crate::instance::{generate_instance, GeneratorModel, GeneratorParams, StochasticGraph};
use crate::lpmatch::{check_feasibility, solve_lp_match, CheckMode, SolutionFile};
use crate::oracle::{expected_opt_exact, monte_carlo_prepared, ExactEventReport, ExactOracle, OracleMode, DEFAULT_BUDGET, OPT_EDGE_CAP};
use crate::permdist::{build_proportional_distribution, first_realized_marginals, PermDistribution};
use crate::transform::{TransformParams, DEFAULT_LAMBDA, DEFAULT_TAU};
use crate::verify::{lemma_records, run_suite, LemmaCheck, Suite, VerificationReport, VerifyOptions};

#[derive(Debug, Parser)]
#[command(name = "qcmatch", version, about = "Stochastic bipartite matching in the query-commit model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random instance.
    Gen(GenArgs),
    /// Solve the matching LP.
    Solve(SolveArgs),
    /// Monte Carlo runs of one or more algorithms.
    Run(RunArgs),
    /// Exact event probabilities of the single-round algorithm.
    Oracle(OracleArgs),
    /// Numeric verification suites.
    Verify(VerifyArgs),
    /// Summary table over run reports.
    Report(ReportArgs),
    /// Print the permutation distribution of one A vertex.
    Probe(ProbeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value = "uniform")]
    pub model: String,
    #[arg(long, default_value_t = 4)]
    pub na: usize,
    #[arg(long, default_value_t = 4)]
    pub nb: usize,
    #[arg(long, default_value_t = 0.5)]
    pub density: f64,
    #[arg(long, default_value_t = 0.0)]
    pub w_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_max: f64,
    #[arg(long, default_value_t = 0.0)]
    pub p_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub p_max: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Re-check the solution against the full constraint family.
    #[arg(long)]
    pub check: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Comma-separated list of greedy, simple, alg1, apx.
    #[arg(long, value_delimiter = ',', required = true)]
    pub alg: Vec<String>,
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub solution: Option<PathBuf>,
    #[arg(long)]
    pub trials: u64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// LP solution; solved on the fly when absent.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Lemma checks to evaluate: lemma5, fact3, lemma6, lemma7, lemma8, lemma9, correlation or all.
    #[arg(long)]
    pub events: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 1e-3)]
    pub grid_step: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub solution: PathBuf,
    /// Run reports produced by `run`.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    /// Oracle output; adds an exact row for the single-round algorithm.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
    /// Instance used to compute the exact expected optimum.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the aligned text table here.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long)]
    pub solution: PathBuf,
    #[arg(long)]
    pub vertex: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    CheckFailed(String),
    #[error(transparent)]
    Run(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::CheckFailed(_) => 1,
            CliError::Run(e) => match e {
                Error::Parse(_)
                | Error::InvalidEdge { .. }
                | Error::UnknownModel(_)
                | Error::InvalidParameter(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::DegreeAboveSigma { .. }
                | Error::InfeasibleMarginals { .. } => 2,
                _ => 1,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        // Everything except `run` is single-threaded.
        other => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
            pool.install(|| match other {
                Command::Gen(a) => cmd_gen(a),
                Command::Solve(a) => cmd_solve(a),
                Command::Oracle(a) => cmd_oracle(a),
                Command::Verify(a) => cmd_verify(a),
                Command::Report(a) => cmd_report(a),
                Command::Probe(a) => cmd_probe(a),
                Command::Run(_) => unreachable!(),
            })
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    match path {
        Some(p) => write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value).map_err(Error::from)?);
            Ok(())
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("malformed {what} {}: {e}", path.display())))
}

fn load_instance(path: &Path) -> CliResult<StochasticGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read instance {}: {e}", path.display())))?;
    StochasticGraph::from_json(&text).map_err(|e| CliError::Usage(format!("instance {}: {e}", path.display())))
}

fn load_solution(path: &Path, graph: &StochasticGraph) -> CliResult<SolutionFile> {
    let sol: SolutionFile = read_json(path, "solution")?;
    sol.check_against(graph).map_err(|e| CliError::Usage(format!("solution {}: {e}", path.display())))?;
    Ok(sol)
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<()> {
    let model: GeneratorModel = args.model.parse()?;
    let params = GeneratorParams {
        a_count: args.na,
        b_count: args.nb,
        density: args.density,
        w_min: args.w_min,
        w_max: args.w_max,
        p_min: args.p_min,
        p_max: args.p_max,
    };
    let graph = generate_instance(model, &params, args.seed)?;
    graph.save(&args.out)?;
    println!("wrote {} ({} A, {} B, {} edges)", args.out.display(), graph.a_count(), graph.b_count(), graph.edge_count());
    Ok(())
}

pub fn cmd_solve(args: &SolveArgs) -> CliResult<()> {
    let mode = args.check.as_deref().map(str::parse::<CheckMode>).transpose()?;
    let graph = load_instance(&args.instance)?;
    let sol = solve_lp_match(&graph)?;
    SolutionFile::from(&sol).save(&args.out)?;
    println!(
        "objective {:.10} after {} rounds, {} constraints",
        sol.objective,
        sol.rounds,
        sol.generated_constraints.len()
    );
    if let Some(mode) = mode {
        let report = check_feasibility(&graph, &sol.x, mode)?;
        println!("{} check: worst violation {:.3e}", args.check.as_deref().unwrap_or_default(), report.worst_violation);
        if !report.feasible {
            return Err(CliError::CheckFailed(format!(
                "solution violates {:?} by {:.3e}",
                report.witness,
                report.worst_violation
            )));
        }
    }
    Ok(())
}

/// One algorithm's entry in a run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub mean: f64,
    pub std_error: f64,
    pub match_frequency: Vec<f64>,
    pub branch: Option<ApxBranch>,
    /// Light-edge LP mass, reported for the two-branch algorithm.
    pub light_mass: Option<f64>,
    pub ratio_vs_lp: Option<f64>,
}

/// Output of `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub edges: usize,
    pub trials: u64,
    pub seed: u64,
    pub params: TransformParams,
    pub lp_objective: Option<f64>,
    pub algorithms: Vec<AlgorithmSummary>,
}

pub fn cmd_run(args: &RunArgs) -> CliResult<()> {
    let params = TransformParams::new(args.sigma, args.tau, args.lambda)?;
    let algorithms = args.alg.iter().map(|s| s.parse::<Algorithm>()).collect::<crate::Result<Vec<_>>>()?;
    if args.trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    if args.threads == Some(0) {
        return Err(CliError::Usage("threads must be at least 1".into()));
    }
    let graph = load_instance(&args.instance)?;
    let solution = args.solution.as_deref().map(|p| load_solution(p, &graph)).transpose()?;
    if solution.is_none() {
        if let Some(a) = algorithms.iter().find(|a| a.needs_solution()) {
            return Err(CliError::Usage(format!("algorithm {a} needs --solution")));
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let lp = solution.as_ref().map(|s| s.objective);
    let mut summaries = Vec::new();
    for algorithm in algorithms {
        let config = AlgorithmConfig { algorithm, params, seed: args.seed };
        let x = solution.as_ref().map(|s| s.x.as_slice());
        let prepared = PreparedAlgorithm::new(&graph, x, &config)?;
        let est = pool.install(|| monte_carlo_prepared(&prepared, args.trials, args.seed))?;
        summaries.push(AlgorithmSummary {
            algorithm,
            mean: est.mean,
            std_error: est.std_error,
            match_frequency: est.match_frequency,
            branch: est.branch,
            light_mass: prepared.light_mass(),
            ratio_vs_lp: lp.filter(|&v| v > 0.0).map(|v| est.mean / v),
        });
    }
    let report = RunReport {
        edges: graph.edge_count(),
        trials: args.trials,
        seed: args.seed,
        params,
        lp_objective: lp,
        algorithms: summaries,
    };
    write_json(&args.out, &report)?;
    for s in &report.algorithms {
        println!("{:<7} mean {:.6} stderr {:.2e}", s.algorithm.to_string(), s.mean, s.std_error);
    }
    Ok(())
}

/// Output of `oracle`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutput {
    pub sigma: f64,
    pub report: ExactEventReport,
    pub lemmas: Option<VerificationReport>,
}

pub fn cmd_oracle(args: &OracleArgs) -> CliResult<()> {
    if !(args.sigma > 0.0 && args.sigma <= 1.0) {
        return Err(CliError::Usage("sigma must lie in (0,1]".into()));
    }
    let checks = args.events.as_deref().map(LemmaCheck::parse_list).transpose()?;
    let graph = load_instance(&args.instance)?;
    let x = match &args.solution {
        Some(p) => load_solution(p, &graph)?.x,
        None => solve_lp_match(&graph)?.x,
    };
    let oracle = ExactOracle::new(&graph, &x, OracleMode::Modified { sigma: args.sigma }, DEFAULT_BUDGET)?;
    let lemmas = checks.map(|c| lemma_records(&graph, &x, args.sigma, &oracle, &c));
    let output = OracleOutput { sigma: args.sigma, report: oracle.report(&[]), lemmas };
    emit_json(args.out.as_deref(), &output)?;
    match &output.lemmas {
        Some(l) if !l.pass => {
            let names: Vec<&str> = l.failures().iter().map(|c| c.name.as_str()).collect();
            Err(CliError::CheckFailed(format!("failed checks: {}", names.join(", "))))
        }
        _ => Ok(()),
    }
}

pub fn cmd_verify(args: &VerifyArgs) -> CliResult<()> {
    let suite: Suite = args.suite.parse()?;
    let options = VerifyOptions { grid_step: args.grid_step, seed: args.seed, ..VerifyOptions::default() };
    let report = run_suite(suite, &options)?;
    emit_json(args.out.as_deref(), &report)?;
    if report.pass {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().iter().map(|c| c.name.as_str()).collect();
        Err(CliError::CheckFailed(format!("failed checks: {}", names.join(", "))))
    }
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub mean: f64,
    pub std_error: f64,
    pub ratio_vs_lp: Option<f64>,
    pub ratio_vs_opt: Option<f64>,
    pub branch: Option<ApxBranch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub lp_objective: f64,
    pub exact_opt: Option<f64>,
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn table(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |r| format!("{r:.6}"));
        let header = ["algorithm", "mean", "stderr", "ratio_vs_lp", "ratio_vs_opt", "branch"];
        let mut rows: Vec<[String; 6]> = vec![header.map(String::from)];
        for r in &self.rows {
            rows.push([
                r.algorithm.clone(),
                format!("{:.6}", r.mean),
                format!("{:.2e}", r.std_error),
                fmt_opt(r.ratio_vs_lp),
                fmt_opt(r.ratio_vs_opt),
                r.branch.map_or_else(|| "-".to_string(), |b| serde_json::to_value(b).unwrap().as_str().unwrap().to_string()),
            ]);
        }
        let widths: Vec<usize> = (0..6).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    let solution: SolutionFile = read_json(&args.solution, "solution")?;
    let exact_opt = match &args.instance {
        Some(p) => {
            let graph = load_instance(p)?;
            solution.check_against(&graph).map_err(|e| CliError::Usage(format!("solution {}: {e}", args.solution.display())))?;
            if graph.edge_count() <= OPT_EDGE_CAP {
                Some(expected_opt_exact(&graph)?)
            } else {
                None
            }
        }
        None => None,
    };
    let lp = solution.objective;
    let ratio = |mean: f64, base: Option<f64>| base.filter(|&b| b > 0.0).map(|b| mean / b);
    let mut rows = Vec::new();
    for path in &args.runs {
        let run: RunReport = read_json(path, "run report")?;
        if run.algorithms.iter().any(|a| a.match_frequency.len() != solution.x.len()) {
            return Err(CliError::Usage(format!("run report {} does not match the solution's edge count", path.display())));
        }
        for a in run.algorithms {
            rows.push(SummaryRow {
                algorithm: a.algorithm.to_string(),
                mean: a.mean,
                std_error: a.std_error,
                ratio_vs_lp: ratio(a.mean, Some(lp)),
                ratio_vs_opt: ratio(a.mean, exact_opt),
                branch: a.branch,
            });
        }
    }
    if let Some(p) = &args.oracle {
        let o: OracleOutput = read_json(p, "oracle output")?;
        let mean = o.report.expected_weight;
        rows.push(SummaryRow {
            algorithm: format!("alg1-exact(sigma={})", o.sigma),
            mean,
            std_error: 0.0,
            ratio_vs_lp: ratio(mean, Some(lp)),
            ratio_vs_opt: ratio(mean, exact_opt),
            branch: None,
        });
    }
    let summary = Summary { lp_objective: lp, exact_opt, rows };
    write_json(&args.out, &summary)?;
    let table = summary.table();
    if let Some(t) = &args.table {
        std::fs::write(t, &table).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", t.display())))?;
    }
    print!("{table}");
    Ok(())
}

/// Output of `probe`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeOutput {
    pub distribution: PermDistribution,
    /// `(edge, target, achieved)` for every edge of the vertex.
    pub marginals: Vec<(usize, f64, f64)>,
}

pub fn cmd_probe(args: &ProbeArgs) -> CliResult<()> {
    let graph = load_instance(&args.instance)?;
    let sol = load_solution(&args.solution, &graph)?;
    if args.vertex >= graph.a_count() {
        return Err(CliError::Usage(format!("vertex {} is out of range (A has {} vertices)", args.vertex, graph.a_count())));
    }
    let dist = build_proportional_distribution(&graph, args.vertex, &sol.x)?;
    let achieved = first_realized_marginals(&dist, &graph);
    let marginals = dist.targets.iter().map(|&(e, t)| (e, t, achieved[e])).collect();
    emit_json(args.out.as_deref(), &ProbeOutput { distribution: dist, marginals })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_seed_is_a_usage_error() {
        assert_eq!(main_with_args(["qcmatch", "gen", "--out", "/tmp/never-written.json"]), 2);
    }

    #[test]
    fn bad_lambda_exits_with_two() {
        let err = TransformParams::new(1.0, DEFAULT_TAU, 1.5).unwrap_err();
        assert_eq!(CliError::from(err).exit_code(), 2);
    }

    #[test]
    fn table_is_aligned() {
        let s = Summary {
            lp_objective: 1.0,
            exact_opt: Some(0.9),
            rows: vec![
                SummaryRow { algorithm: "greedy".into(), mean: 0.5, std_error: 1e-3, ratio_vs_lp: Some(0.5), ratio_vs_opt: Some(0.5 / 0.9), branch: None },
                SummaryRow { algorithm: "apx".into(), mean: 0.7, std_error: 2e-3, ratio_vs_lp: Some(0.7), ratio_vs_opt: None, branch: Some(ApxBranch::Heavy) },
            ],
        };
        let t = s.table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        let col = lines[0].find("mean").unwrap();
        assert_eq!(&lines[1][col..col + 8], "0.500000");
        assert!(lines[2].ends_with("heavy"));
    }
}
