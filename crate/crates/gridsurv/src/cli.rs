//! The `gridsurv` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use gridsurv_core::contingency::{count_states, count_states_exact};
use gridsurv_core::model::{augment_with_duplicates, Contingency, CostRule, Design, PowerSystem, SurvivabilityPolicy};
use gridsurv_core::opf::{solve_psp_with, SHED_TOL};
use gridsurv_core::planner::{plan_with, Algorithm, PlannerConfig, Runtime, Termination};
use gridsurv_core::separation::{solve_separation_exact_with, SeparationOptions};
use gridsurv_core::solver::BuiltinSolver;

use crate::cases::builtin;
use crate::io::case::{parse_case, write_case, Strictness};
use crate::io::matpower::parse_matpower;
use crate::io::plan::{read_plan, write_plan};
use crate::io::report::{write_report, ReportRow};
use crate::runtime::{StdClock, ThreadExecutor};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_LIMIT: i32 = 3;
pub const EXIT_VIOLATED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "gridsurv", version, about = "Survivable generation and transmission expansion planning")]
struct Cli {
    /// Largest number of subproblems solved concurrently [default: all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress (-v) or every iteration (-vv)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute a least-cost survivable expansion plan
    Plan(PlanArgs),
    /// Find the worst contingency for a given plan
    Separate(SeparateArgs),
    /// Count the contingency states with at most k failures
    Enumerate(EnumerateArgs),
    /// Write any readable case (builtin, MATPOWER or TOML) as a TOML case
    Convert(ConvertArgs),
}

#[derive(Debug, Args)]
struct CaseArgs {
    /// Builtin case (t2, t3, t3-cand, ieee30, ieee30-aug), a MATPOWER `.m`
    /// file, or a TOML case file
    #[arg(long)]
    case: String,
    /// Warn about unknown fields in TOML cases instead of rejecting them
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
struct PolicyArgs {
    #[arg(long)]
    k: usize,
    /// Allowance for two or more failures; single failures get 0
    #[arg(long, conflicts_with = "eps_schedule")]
    eps: Option<f64>,
    /// Per-cardinality allowances such as `1=0,2=0.05`; unlisted
    /// cardinalities get 0 [default: 0, 0, 0.05, 0.10, 0.20 by k]
    #[arg(long, value_parser = parse_schedule)]
    eps_schedule: Option<BTreeMap<usize, f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgoArg {
    Ef,
    Bd,
    Cpa,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, value_enum)]
    algo: AlgoArg,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Relative optimality gap of the master problem
    #[arg(long, default_value_t = 1e-3)]
    gap: f64,
    /// Wall-clock limit in seconds
    #[arg(long)]
    time_limit: Option<f64>,
    /// Write the plan to this file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append a row to this CSV report (created with a header if needed)
    #[arg(long)]
    report: Option<PathBuf>,
    /// Instance name for the report [default: the case name]
    #[arg(long)]
    instance: Option<String>,
}

#[derive(Debug, Args)]
struct SeparateArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Plan file written by `plan --out`
    #[arg(long)]
    plan: PathBuf,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("size").required(true).args(["n", "case"])))]
struct EnumerateArgs {
    /// Number of failable elements
    #[arg(long)]
    n: Option<usize>,
    /// Take n from a case
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    k: usize,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Add a candidate duplicate of every existing element, costing this
    /// factor per MW of rating
    #[arg(long)]
    augment: Option<f64>,
    /// Output file [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_schedule(s: &str) -> Result<BTreeMap<usize, f64>, String> {
    let mut out = BTreeMap::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (j, v) = part.split_once('=').ok_or_else(|| format!("expected j=value, got `{part}`"))?;
        let j: usize = j.trim().parse().map_err(|_| format!("bad cardinality `{j}`"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("bad allowance `{v}`"))?;
        if out.insert(j, v).is_some() {
            return Err(format!("cardinality {j} given twice"));
        }
    }
    Ok(out)
}

/// A failure that ends the command with exit code 1.
#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn load_case(args: &CaseArgs) -> Result<(String, PowerSystem), Failure> {
    let path = Path::new(&args.case);
    if !path.exists() {
        if let Some(sys) = builtin(&args.case) {
            return Ok((args.case.clone(), sys));
        }
    }
    let text = std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let in_file = |e: &dyn std::fmt::Display| Failure(format!("{}: {e}", path.display()));
    let sys = if path.extension().is_some_and(|e| e == "m") {
        parse_matpower(&text).map_err(|e| in_file(&e))?
    } else {
        let strictness = if args.lenient { Strictness::Lenient } else { Strictness::Strict };
        parse_case(&text, strictness).map_err(|e| in_file(&e))?.system
    };
    let name = path
        .file_stem()
        .map_or_else(|| args.case.clone(), |s| s.to_string_lossy().into_owned());
    Ok((name, sys))
}

fn policy(args: &PolicyArgs) -> Result<SurvivabilityPolicy, Failure> {
    Ok(match (&args.eps, &args.eps_schedule) {
        (Some(eps), _) => SurvivabilityPolicy::with_epsilon(args.k, *eps)?,
        (None, Some(schedule)) => SurvivabilityPolicy::from_schedule(args.k, schedule, true)?,
        (None, None) => SurvivabilityPolicy::table_one(args.k),
    })
}

fn names(sys: &PowerSystem, design: &Design) -> String {
    let builds: Vec<&str> = design.builds(sys).into_iter().map(|e| sys.element_name(e)).collect();
    if builds.is_empty() {
        "-".to_string()
    } else {
        builds.join(",")
    }
}

fn run_plan(args: PlanArgs, executor: &ThreadExecutor, out: &mut dyn Write) -> Result<i32, Failure> {
    let (name, sys) = load_case(&args.case)?;
    let algorithm = match args.algo {
        AlgoArg::Ef => Algorithm::Extensive,
        AlgoArg::Bd => Algorithm::Benders,
        AlgoArg::Cpa => Algorithm::CuttingPlane,
    };
    let mut cfg = PlannerConfig::new(algorithm, policy(&args.policy)?);
    cfg.gap = args.gap;
    cfg.time_limit = args.time_limit;
    let solver = BuiltinSolver::default();
    let clock = StdClock::new();
    let rt = Runtime {
        backend: &solver,
        clock: &clock,
        executor,
    };
    let report = plan_with(&rt, &sys, &cfg)?;

    writeln!(out, "status {}", report.termination.as_str())?;
    if let Some(p) = &report.plan {
        writeln!(out, "objective {:.3}", p.objective)?;
        writeln!(out, "builds {}", names(&sys, &p.design))?;
    }
    if let Some(bound) = report.bound {
        writeln!(out, "bound {bound:.3}")?;
    }
    writeln!(
        out,
        "iterations {}, cuts {}, time {:.3}s",
        report.iterations,
        report.cuts.len(),
        report.total_time
    )?;

    if let (Some(path), Some(p)) = (&args.out, &report.plan) {
        std::fs::write(path, write_plan(&sys, p)).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &args.report {
        let instance = args.instance.as_deref().unwrap_or(&name);
        let row = ReportRow::from_run(instance, &sys, &cfg, &report);
        append_report(path, row)?;
    }
    Ok(match report.termination {
        Termination::Optimal => EXIT_OK,
        Termination::Infeasible => EXIT_INFEASIBLE,
        Termination::IterationLimit | Termination::TimeLimit | Termination::NodeLimit => EXIT_LIMIT,
    })
}

fn append_report(path: &Path, row: ReportRow) -> Result<(), Failure> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let text = write_report(&[row]);
    let body = if fresh {
        text.as_str()
    } else {
        text.split_once('\n').map_or("", |(_, rest)| rest)
    };
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    file.write_all(body.as_bytes())?;
    Ok(())
}

/// Worst state of each cardinality class against its own allowance.
fn run_separate(args: SeparateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let (_, sys) = load_case(&args.case)?;
    let policy = policy(&args.policy)?;
    let text = std::fs::read_to_string(&args.plan).map_err(|e| Failure(format!("{}: {e}", args.plan.display())))?;
    let design = read_plan(&text, &sys)
        .map_err(|e| Failure(format!("{}: {e}", args.plan.display())))?
        .design;
    let solver = BuiltinSolver::default();
    let clock = StdClock::new();
    let opts = SeparationOptions::default();

    let base = solve_psp_with(&solver, &sys, &design, &Contingency::none(), opts.big_m)?;
    let mut worst = (Contingency::none(), base.shed);
    let mut violation: Option<(Contingency, f64, f64)> = None;
    for j in 1..=policy.k {
        let limit = policy.threshold(j, &sys)?;
        let Some(r) = solve_separation_exact_with(&solver, &clock, &sys, &design, j, limit, &opts)? else {
            break;
        };
        log::info!(
            "cardinality {j}: worst shed {:.6} at {}",
            r.worst_shed,
            r.worst_contingency.describe(&sys)
        );
        if r.worst_shed > worst.1 + 1e-9 {
            worst = (r.worst_contingency.clone(), r.worst_shed);
        }
        let excess = r.worst_shed - limit;
        if excess > SHED_TOL && violation.as_ref().is_none_or(|(_, s, l)| excess > s - l) {
            violation = Some((r.worst_contingency, r.worst_shed, limit));
        }
    }
    if base.shed > SHED_TOL {
        writeln!(out, "violated: the plan sheds {:.3} with no failures", base.shed)?;
        return Ok(EXIT_VIOLATED);
    }
    match violation {
        Some((c, shed, limit)) => {
            writeln!(out, "violated by {{{}}}, shed {shed:.3} above limit {limit:.3}", c.describe(&sys))?;
            Ok(EXIT_VIOLATED)
        }
        None => {
            writeln!(out, "compliant, worst shed {:.3} at {{{}}}", worst.1, worst.0.describe(&sys))?;
            Ok(EXIT_OK)
        }
    }
}

fn run_enumerate(args: EnumerateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let n = match (args.n, &args.case) {
        (Some(n), _) => n,
        (None, Some(case)) => {
            let case = CaseArgs {
                case: case.clone(),
                lenient: false,
            };
            load_case(&case)?.1.num_elements()
        }
        (None, None) => unreachable!("clap requires one of --n and --case"),
    };
    match count_states(n, args.k) {
        Ok(c) => writeln!(out, "{c}")?,
        Err(_) => writeln!(out, "{}", count_states_exact(n, args.k))?,
    }
    Ok(EXIT_OK)
}

fn run_convert(args: ConvertArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let (_, mut sys) = load_case(&args.case)?;
    if let Some(f) = args.augment {
        if !(f >= 0.0 && f.is_finite()) {
            return Err(Failure(format!("--augment must be a nonnegative number, got {f}")));
        }
        sys = augment_with_duplicates(&sys, CostRule::PerMw(f), CostRule::PerMw(f));
    }
    let text = write_case(&sys);
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure(format!("{}: {e}", path.display())))?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(EXIT_OK)
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = write!(err, "{}", e.render());
            return EXIT_USAGE;
        }
        Err(e) => {
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    let executor = cli.threads.map_or_else(ThreadExecutor::available, ThreadExecutor::new);
    let result = match cli.command {
        Command::Plan(a) => run_plan(a, &executor, out),
        Command::Separate(a) => run_separate(a, out),
        Command::Enumerate(a) => run_enumerate(a, out),
        Command::Convert(a) => run_convert(a, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
    }
}
