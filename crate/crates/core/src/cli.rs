//! Command-line front end: `gridsens <command> --case FILE [flags]`.
//!
//! Exit codes: 0 success, 1 control run or FD check that did not verify,
//! 2 numerical failure (non-convergence, singular Jacobian, islanding),
//! 3 bad input (parse, validation, I/O, flags).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::cases;
use crate::control::{self, ControlResult, SwitchProblem, SwitchSpec, VregSpec};
use crate::error::{Error, Result};
use crate::fdoracle::{self, FdConfig, ENUMERATION_LIMIT};
use crate::netmodel::{make_admittance_state, parse_case, read_case, Network, Sidecar};
use crate::pfsolve::{export_solution, solve, SolveOptions};
use crate::predictor::{self, Scenario, Strategy};
use crate::sensitivity::{self, Wrt};

#[derive(Parser, Debug)]
#[command(name = "gridsens", version, about = "AC power flow with admittance sensitivities")]
pub struct Cli {
    /// MATPOWER-style case file, or `builtin:case33bw|case69bw|five_bus`.
    #[arg(long, global = true)]
    pub case: Option<String>,
    /// JSON sidecar marking controllable branches.
    #[arg(long, global = true)]
    pub controllables: Option<PathBuf>,
    /// Output file (directory for `sens`). Standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for sweeps and finite-difference checks.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Newton-Raphson mismatch tolerance (per-unit).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WrtArg {
    Admittance,
    Injection,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OpenLines {
    Include,
    Skip,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the power flow and write the bus solution.
    Solve,
    /// Dump labeled sensitivity matrices into the `--out` directory.
    Sens {
        #[arg(long, value_enum, default_value = "admittance")]
        wrt: WrtArg,
        /// Whether branches that are open in the case file get columns.
        #[arg(long, value_enum, default_value = "include")]
        open_lines: OpenLines,
        /// Also compare sampled entries against finite differences.
        #[arg(long)]
        fdcheck: bool,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        /// Entries sampled per block by `--fdcheck`.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Predict voltages and currents for scenarios from one linearization.
    Predict {
        #[command(flatten)]
        scenarios: ScenarioArgs,
        #[arg(long, default_value = "base")]
        linearize_at: String,
    },
    /// Compare prediction strategies against AC solves over scenarios.
    Sweep {
        #[command(flatten)]
        scenarios: ScenarioArgs,
        /// Comma-separated strategies (none, base, midpoint, all-average,
        /// endpoints-average).
        #[arg(long, default_value = "none,base,midpoint,all-average,endpoints-average")]
        linearize_at: String,
    },
    /// Maximize hosting capacity by LP over injections and line multipliers.
    Vreg {
        /// Regulation spec (JSON). Without it the hosting-capacity recipe is used.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Recipe line-multiplier box, in percent: gamma in [1 - p/100, 1 + p/100].
        #[arg(long, default_value_t = 20.0)]
        gamma_pct: f64,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Greedy switching to relieve overloads.
    Switch {
        /// Switching problem (JSON). Without it the case's open branches are
        /// switchable and ratings are the capacities.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Finite-difference check of every sensitivity block, or enumeration of
    /// switching configurations with `--enumerate`.
    Fdcheck {
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        /// Comma-separated branches `from-to` to enumerate instead.
        #[arg(long)]
        enumerate: Option<String>,
    },
}

#[derive(Args, Debug)]
pub struct ScenarioArgs {
    /// Scenario file (JSON list of `{id, gamma: [{from, to, re, im}]}`).
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Every on/off combination of `--lines`.
    #[arg(long)]
    pub powerset: bool,
    /// Comma-separated branches `from-to`; defaults to the open branches.
    #[arg(long)]
    pub lines: Option<String>,
}

/// Outcome of a command before it becomes an exit code.
enum Outcome {
    Ok,
    NotVerified(String),
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().filter_or("GRIDSENS_LOG", "warn"))
        .format_timestamp(None)
        .try_init();
    match run(&cli) {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::NotVerified(msg)) => {
            eprintln!("gridsens: {msg}");
            1
        }
        Err(e) => {
            eprintln!("gridsens: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        3
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    if cli.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    if cli.tol.is_some() || cli.max_iter.is_some() {
        let d = SolveOptions::default();
        SolveOptions::set_process_default(cli.tol.unwrap_or(d.tol), cli.max_iter.unwrap_or(d.max_iter))?;
    }
    let net = load_network(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| dispatch(cli, net))
}

fn load_network(cli: &Cli) -> Result<Network> {
    let case = cli.case.as_deref().ok_or_else(|| Error::Config("--case is required".into()))?;
    let net = match case.strip_prefix("builtin:") {
        Some("case33bw") => parse_case(cases::CASE33BW)?,
        Some("case69bw") => parse_case(cases::CASE69BW)?,
        Some("five_bus") => parse_case(cases::FIVE_BUS)?,
        Some(other) => return Err(Error::Config(format!("unknown builtin case {other}"))),
        None => read_case(case)?,
    };
    match &cli.controllables {
        Some(p) => Sidecar::read(p)?.apply(&net),
        None => Ok(net),
    }
}

fn dispatch(cli: &Cli, net: Network) -> Result<Outcome> {
    match &cli.command {
        Command::Solve => cmd_solve(cli, &net),
        Command::Sens { wrt, open_lines, fdcheck, step, samples } => {
            let wrt = match wrt {
                WrtArg::Admittance => Wrt::Admittance,
                WrtArg::Injection => Wrt::Injection,
                WrtArg::Both => Wrt::Both,
            };
            let fd = fdcheck.then_some((*step, *samples));
            cmd_sens(cli, &net, wrt, *open_lines == OpenLines::Include, fd)
        }
        Command::Predict { scenarios, linearize_at } => cmd_predict(cli, net, scenarios, linearize_at),
        Command::Sweep { scenarios, linearize_at } => cmd_sweep(cli, net, scenarios, linearize_at),
        Command::Vreg { spec, gamma_pct, iters } => cmd_vreg(cli, &net, spec.as_deref(), *gamma_pct, *iters),
        Command::Switch { spec, budget } => cmd_switch(cli, &net, spec.as_deref(), *budget),
        Command::Fdcheck { step, samples, enumerate } => {
            cmd_fdcheck(cli, &net, *step, *samples, enumerate.as_deref())
        }
    }
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn solve_base(net: &Network) -> Result<crate::pfsolve::PowerFlowSolution> {
    solve(net, &make_admittance_state(net, &net.default_gamma())?, None)
}

fn cmd_solve(cli: &Cli, net: &Network) -> Result<Outcome> {
    let sol = solve_base(net)?;
    let export = export_solution(net, &sol);
    let text = match cli.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&export)?,
        Format::Csv => {
            let mut s = String::from("id,vm,va_deg,p,q\n");
            for b in &export.bus {
                s.push_str(&format!("{},{},{},{},{}\n", b.id, b.vm, b.va_deg, b.p, b.q));
            }
            s
        }
    };
    emit(cli, &text)?;
    Ok(Outcome::Ok)
}

fn cmd_sens(
    cli: &Cli,
    net: &Network,
    wrt: Wrt,
    include_open: bool,
    fd: Option<(f64, usize)>,
) -> Result<Outcome> {
    let dir = cli.out.as_deref().ok_or_else(|| Error::Config("sens needs --out DIR".into()))?;
    let cfg = fd.map(|(h, _)| FdConfig::with_step(h)).transpose()?;
    let sol = solve_base(net)?;
    let b = sensitivity::bundle(&sol, net)?;
    fs::create_dir_all(dir)?;
    let format = cli.format.unwrap_or(Format::Csv);
    let blocks = sensitivity::export_blocks(&b, net, wrt, include_open);
    for block in &blocks {
        let (ext, text) = match format {
            Format::Csv => ("csv", block.to_csv()),
            Format::Json => ("json", to_json(block)?),
        };
        fs::write(dir.join(format!("{}.{ext}", block.name)), text)?;
    }
    log::info!("wrote {} blocks to {}", blocks.len(), dir.display());
    let (Some(cfg), Some((_, samples))) = (cfg, fd) else {
        return Ok(Outcome::Ok);
    };
    let records = fdoracle::check_bundle(net, &b, samples, cli.seed, &cfg)?;
    fs::write(dir.join("fdcheck.csv"), fdoracle::probes_csv(&records))?;
    fd_summary(&records)
}

fn fd_summary(records: &[fdoracle::ProbeRecord]) -> Result<Outcome> {
    let worst = records.iter().map(|r| r.error).fold(0.0, f64::max);
    let failed = records.iter().filter(|r| !r.pass).count();
    eprintln!("fdcheck: {} probes, max error {worst:.3e}, {failed} failed", records.len());
    if failed == 0 {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::NotVerified(format!("{failed} finite-difference probes outside tolerance")))
    }
}

/// Parses `"a-b,c-d"` into branch indices.
fn parse_lines(net: &Network, text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (a, b) = item
                .trim()
                .split_once('-')
                .ok_or_else(|| Error::Config(format!("branch '{item}' is not of the form from-to")))?;
            let parse = |s: &str| {
                s.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad bus id in '{item}'")))
            };
            let (a, b) = (parse(a)?, parse(b)?);
            net.branch_index(a, b).ok_or_else(|| Error::Validation(format!("unknown branch {a}-{b}")))
        })
        .collect()
}

/// Resolves the scenario set; listed powerset lines become controllable.
fn load_scenarios(net: Network, args: &ScenarioArgs) -> Result<(Network, Vec<Scenario>)> {
    match (&args.scenarios, args.powerset) {
        (Some(_), true) => Err(Error::Config("use either --scenarios or --powerset".into())),
        (Some(p), false) => {
            let text = fs::read_to_string(p)?;
            let sc = predictor::scenarios_from_json(&net, &text)?;
            Ok((net, sc))
        }
        (None, true) => {
            let lines = match &args.lines {
                Some(l) => parse_lines(&net, l)?,
                None => cases::open_branches(&net),
            };
            if lines.is_empty() {
                return Err(Error::Config("no lines for the power set".into()));
            }
            if lines.len() > ENUMERATION_LIMIT {
                return Err(Error::Config(format!("power set limited to {ENUMERATION_LIMIT} lines")));
            }
            let marks: Vec<_> = lines
                .iter()
                .filter(|&&k| !net.branches()[k].controllable)
                .map(|&k| (k, 0.0, 1.0))
                .collect();
            let net = net.with_controllable(&marks)?;
            let sc = predictor::powerset_scenarios(&net, &lines)?;
            Ok((net, sc))
        }
        (None, false) => Err(Error::Config("give --scenarios FILE or --powerset".into())),
    }
}

fn parse_strategies(text: &str) -> Result<Vec<Strategy>> {
    text.split(',')
        .map(|s| Strategy::parse(s.trim()).ok_or_else(|| Error::Config(format!("unknown strategy '{s}'"))))
        .collect()
}

fn cmd_predict(cli: &Cli, net: Network, args: &ScenarioArgs, at: &str) -> Result<Outcome> {
    let strategy = match parse_strategies(at)?.as_slice() {
        [s] => *s,
        _ => return Err(Error::Config("predict takes a single --linearize-at strategy".into())),
    };
    let (net, scenarios) = load_scenarios(net, args)?;
    let preds = predictor::predict_scenarios(&net, &scenarios, strategy)?;
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => predictor::predictions_csv(&net, &preds),
        Format::Json => to_json(&preds)?,
    };
    emit(cli, &text)?;
    Ok(Outcome::Ok)
}

fn cmd_sweep(cli: &Cli, net: Network, args: &ScenarioArgs, at: &str) -> Result<Outcome> {
    let strategies = parse_strategies(at)?;
    let (net, scenarios) = load_scenarios(net, args)?;
    let rows = predictor::sweep(&net, &scenarios, &strategies)?;
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => predictor::sweep_csv(&rows),
        Format::Json => to_json(&rows)?,
    };
    emit(cli, &text)?;
    if strategies.contains(&Strategy::None) {
        for &s in strategies.iter().filter(|&&s| s != Strategy::None) {
            let (wins, total) = predictor::win_rate(&rows, s, Strategy::None);
            eprintln!("{}: beats none in {wins}/{total} scenarios", s.name());
        }
    }
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct VregReport<'a> {
    /// Objective of the same run with every line multiplier fixed at 1.
    baseline_mw: Option<f64>,
    increase_pct: Option<f64>,
    #[serde(flatten)]
    result: &'a ControlResult,
}

fn cmd_vreg(
    cli: &Cli,
    net: &Network,
    spec_path: Option<&Path>,
    gamma_pct: f64,
    iters: Option<usize>,
) -> Result<Outcome> {
    let (result, baseline) = match spec_path {
        Some(p) => {
            let mut spec: VregSpec = serde_json::from_str(&fs::read_to_string(p)?)?;
            if let Some(n) = iters {
                spec.iters = n;
            }
            (control::solve_vreg(net, &spec)?, None)
        }
        None => {
            if !(0.0..100.0).contains(&gamma_pct) {
                return Err(Error::Config("--gamma-pct must lie in [0, 100)".into()));
            }
            let iters = iters.unwrap_or(10);
            let (wide_net, wide) = control::hosting_capacity_recipe(net, gamma_pct / 100.0, iters)?;
            let result = control::solve_vreg(&wide_net, &wide)?;
            let baseline = if gamma_pct > 0.0 {
                let (fixed_net, fixed) = control::hosting_capacity_recipe(net, 0.0, iters)?;
                Some(control::solve_vreg(&fixed_net, &fixed)?.objective_mw)
            } else {
                Some(result.objective_mw)
            };
            (result, baseline)
        }
    };
    let increase_pct = baseline.map(|b| 100.0 * (result.objective_mw / b - 1.0));
    let report = VregReport { baseline_mw: baseline, increase_pct, result: &result };
    emit(cli, &to_json(&report)?)?;
    eprintln!(
        "vreg: objective {:.6} MW{}, rel l2 error {:.3e}, feasible {}",
        result.objective_mw,
        increase_pct.map(|p| format!(" ({p:+.2}% over fixed lines)")).unwrap_or_default(),
        result.rel_l2_error,
        result.feasible
    );
    verified(&result)
}

fn verified(result: &ControlResult) -> Result<Outcome> {
    if result.feasible {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::NotVerified(format!(
            "AC verification failed (max violation {:.3e} pu)",
            result.max_violation
        )))
    }
}

fn cmd_switch(cli: &Cli, net: &Network, spec_path: Option<&Path>, budget: Option<usize>) -> Result<Outcome> {
    let prob = match spec_path {
        Some(p) => SwitchSpec::from_json(&fs::read_to_string(p)?)?.resolve(net, cli.seed, budget)?,
        None => {
            let switchable = cases::open_branches(net);
            let z0 = vec![false; switchable.len()];
            let capacity = (0..net.m()).map(|k| net.current_limit(k)).collect();
            let budget = budget.unwrap_or(switchable.len().min(2));
            SwitchProblem::new(net, switchable, budget, z0, capacity, (0.9, 1.1), cli.seed)?
        }
    };
    let snet = prob.network(net)?;
    let result = control::quick_switch(&snet, &prob)?;
    emit(cli, &to_json(&result)?)?;
    eprintln!(
        "switch: congestion {:.6}, {} iterations, feasible {}",
        result.objective_value,
        result.history.len() - 1,
        result.feasible
    );
    verified(&result)
}

fn cmd_fdcheck(cli: &Cli, net: &Network, step: f64, samples: usize, enumerate: Option<&str>) -> Result<Outcome> {
    if let Some(lines) = enumerate {
        let lines = parse_lines(net, lines)?;
        let rows = fdoracle::enumerate_topologies(net, &lines, ENUMERATION_LIMIT)?;
        emit(cli, &fdoracle::topology_csv(net, &lines, &rows))?;
        return Ok(Outcome::Ok);
    }
    let cfg = FdConfig::with_step(step)?;
    let sol = solve_base(net)?;
    let b = sensitivity::bundle(&sol, net)?;
    let records = fdoracle::check_bundle(net, &b, samples, cli.seed, &cfg)?;
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => fdoracle::probes_csv(&records),
        Format::Json => to_json(&records)?,
    };
    emit(cli, &text)?;
    fd_summary(&records)
}
