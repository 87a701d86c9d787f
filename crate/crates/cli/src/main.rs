use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use softsched::format::{IncumbentRecord, SolutionFile, Stats};
use softsched::generate::{small, timetable, SmallParams, TimetableParams};
use softsched::search::{solve_fuzzy_restart, Incumbent};
use softsched::softcumul::{check_atleast, check_cumulative_max};
use softsched::{parse_instance, serialize_instance, solve, Instance, LbMode, SearchConfig, Status, Threshold};

const EXIT_OPTIMAL: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_UNPROVEN: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_NO_SOLUTION: u8 = 4;
const EXIT_INVALID_SOLUTION: u8 = 5;

#[derive(Parser)]
#[command(name = "softsched", version, about = "Timetabling with soft disjunctive and cumulative constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the total penalty of an instance.
    Solve(SolveArgs),
    /// Write a seeded random instance.
    Generate(GenerateArgs),
    /// Check a solution against an instance.
    Verify { instance: PathBuf, solution: PathBuf },
    /// Print a readable summary of a solution.
    Report { instance: PathBuf, solution: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Lb {
    None,
    Min,
    Exp,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    Weighted,
    FuzzyRestart,
}

#[derive(clap::Args)]
struct SolveArgs {
    instance: PathBuf,
    /// Seconds, fractional allowed.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    node_limit: Option<u64>,
    /// Largest violation weight any single activity may accumulate.
    #[arg(long)]
    u_max: Option<u64>,
    #[arg(long, value_enum, default_value = "min")]
    lb: Lb,
    /// Recompute resource contributions every P levels.
    #[arg(long, default_value_t = 1)]
    lb_period: u32,
    #[arg(long, value_enum, default_value = "weighted")]
    objective: ObjectiveArg,
    /// Solution path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stream every incumbent to standard output as one JSON line.
    #[arg(long)]
    emit_incumbents: bool,
}

#[derive(clap::Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 258)]
    courses: usize,
    #[arg(long, default_value_t = 35)]
    rooms: u32,
    #[arg(long, default_value_t = 0.74)]
    occupancy: f64,
    /// Derived from the occupancy target when absent.
    #[arg(long)]
    horizon: Option<u32>,
    #[arg(long, default_value_t = 2)]
    max_duration: u32,
    #[arg(long, default_value_t = 3000)]
    students: usize,
    #[arg(long, default_value_t = 4)]
    courses_per_student: usize,
    #[arg(long, default_value_t = 1.0)]
    popularity_exponent: f64,
    #[arg(long, default_value_t = 0.3)]
    discouraged_fraction: f64,
    #[arg(long, default_value_t = 5)]
    max_initial_cost: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit a tiny mixed instance instead of a timetable.
    #[arg(long)]
    small: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OPTIMAL });
        }
    };
    let result = match cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Generate(args) => run_generate(args),
        Command::Verify { instance, solution } => run_verify(&instance, &solution),
        Command::Report { instance, solution } => run_report(&instance, &solution),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_instance(&bytes).map_err(|e| anyhow::anyhow!("{}: [{}] {e}", path.display(), e.code()))
}

fn load_solution(path: &Path) -> Result<SolutionFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    SolutionFile::parse(&bytes).map_err(|e| anyhow::anyhow!("{}: [{}] {e}", path.display(), e.code()))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn run_solve(args: SolveArgs) -> Result<u8> {
    let instance = load_instance(&args.instance)?;
    let time_limit = match args.time_limit {
        Some(s) if !(s.is_finite() && s > 0.0) => bail!("--time-limit must be a positive number of seconds"),
        Some(s) => Some(Duration::from_secs_f64(s)),
        None => None,
    };
    let cancel = Arc::new(AtomicBool::new(false));
    {
        let cancel = Arc::clone(&cancel);
        ctrlc::set_handler(move || cancel.store(true, Ordering::Relaxed)).context("installing signal handler")?;
    }
    let config = SearchConfig {
        time_limit,
        node_limit: args.node_limit,
        u_max: args.u_max.map_or(Threshold::NONE, Threshold::at_most),
        lb_mode: match args.lb {
            Lb::None => LbMode::None,
            Lb::Min => LbMode::Min,
            Lb::Exp => LbMode::Exp,
        },
        lb_period: args.lb_period,
        cancel: Some(cancel),
        ..SearchConfig::default()
    };

    let emit = args.emit_incumbents;
    let mut on_incumbent = |inc: &Incumbent| {
        if emit {
            let record = IncumbentRecord {
                cost: inc.cost,
                elapsed: inc.elapsed.as_secs_f64(),
                nodes: inc.nodes,
            };
            let line = serde_json::to_string(&record).expect("records serialize");
            let mut stdout = io::stdout().lock();
            let _ = writeln!(stdout, "{line}");
            let _ = stdout.flush();
        }
    };
    let (status, incumbent, stats) = match args.objective {
        ObjectiveArg::Weighted => {
            let out = solve(&instance, &config, &mut on_incumbent)?;
            let stats = Stats {
                nodes: out.nodes,
                elapsed: out.elapsed.as_secs_f64(),
                incumbents: out.incumbents,
            };
            (out.status, out.incumbent, stats)
        }
        ObjectiveArg::FuzzyRestart => {
            let out = solve_fuzzy_restart(&instance, &config, &mut on_incumbent)?;
            eprintln!("fuzzy restart: {} rounds", out.rounds);
            let stats = Stats {
                nodes: out.nodes,
                elapsed: out.elapsed.as_secs_f64(),
                incumbents: out.incumbents,
            };
            (out.status, out.incumbent, stats)
        }
    };

    eprintln!(
        "status: {status:?}, cost: {}, nodes: {}, elapsed: {:.3}s",
        incumbent.as_ref().map_or("none".to_string(), |i| i.cost.to_string()),
        stats.nodes,
        stats.elapsed
    );
    if let Some(inc) = &incumbent {
        let solution = SolutionFile::new(&instance, &inc.assignment, status == Status::Optimal, stats);
        // Keep standard output line-delimited when it also carries the stream.
        let text = if emit && args.out.is_none() {
            serde_json::to_string(&solution)? + "\n"
        } else {
            solution.to_json()
        };
        write_output(args.out.as_deref(), &text)?;
    }
    Ok(match (status, &incumbent) {
        (Status::Optimal, Some(_)) => EXIT_OPTIMAL,
        (Status::Infeasible, _) => EXIT_INFEASIBLE,
        (_, Some(_)) => EXIT_UNPROVEN,
        (_, None) => EXIT_NO_SOLUTION,
    })
}

fn run_generate(args: GenerateArgs) -> Result<u8> {
    let instance = if args.small {
        small(args.seed, &SmallParams::default())
    } else {
        timetable(&TimetableParams {
            courses: args.courses,
            rooms: args.rooms,
            occupancy: args.occupancy,
            horizon: args.horizon,
            max_duration: args.max_duration,
            students: args.students,
            courses_per_student: args.courses_per_student,
            popularity_exponent: args.popularity_exponent,
            discouraged_fraction: args.discouraged_fraction,
            max_initial_cost: args.max_initial_cost,
            seed: args.seed,
        })?
    };
    write_output(args.out.as_deref(), &serialize_instance(&instance))?;
    Ok(EXIT_OPTIMAL)
}

/// Problems with a solution, or none when it is valid.
fn audit(instance: &Instance, solution: &SolutionFile) -> Vec<String> {
    let theta = match solution.assignment_for(instance) {
        Ok(theta) => theta,
        Err(e) => return vec![e.to_string()],
    };
    let mut problems = Vec::new();
    let partial: Vec<_> = theta.0.iter().copied().map(Some).collect();
    for r in instance.resources() {
        if let Err(t) = check_cumulative_max(instance, r, &partial) {
            problems.push(format!("resource {}: above cap_max at slot {t}", r.name));
        }
        if let Err(t) = check_atleast(instance, r, &theta.0) {
            problems.push(format!("resource {}: below cap_min at slot {t}", r.name));
        }
    }
    if let Err(e) = solution.check(instance) {
        problems.push(e.to_string());
    }
    problems
}

fn run_verify(instance: &Path, solution: &Path) -> Result<u8> {
    let inst = load_instance(instance)?;
    let sol = load_solution(solution)?;
    let problems = audit(&inst, &sol);
    if problems.is_empty() {
        println!("valid: cost {}", sol.cost);
        Ok(EXIT_OPTIMAL)
    } else {
        for p in &problems {
            println!("invalid: {p}");
        }
        Ok(EXIT_INVALID_SOLUTION)
    }
}

fn run_report(instance: &Path, solution: &Path) -> Result<u8> {
    let inst = load_instance(instance)?;
    let sol = load_solution(solution)?;
    let problems = audit(&inst, &sol);
    let b = &sol.breakdown;
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line(format!(
        "activities {}, soft pairs {}, resources {}, horizon {}",
        inst.len(),
        inst.soft().len(),
        inst.resources().len(),
        inst.horizon()
    ));
    line(format!(
        "cost {} = initial {} + violations {}{}",
        sol.cost,
        b.initial_cost_sum,
        b.violation_sum,
        if sol.optimal { " (optimal)" } else { "" }
    ));
    line(format!(
        "violated joint enrollment {:.3}%, violated initial preferences {:.3}%",
        b.violated_pct_enrollment, b.violated_pct_initial
    ));
    line(format!("fuzzy satisfaction {}", b.fuzzy.as_deref().unwrap_or("undefined")));
    let worst = b.per_activity_u.iter().max_by_key(|r| (r.u, std::cmp::Reverse(r.id)));
    if let Some(w) = worst {
        line(format!("worst activity {} with incident violation {}", w.id, w.u));
    }
    line(format!(
        "search: {} nodes, {} incumbents, {:.3}s",
        sol.stats.nodes, sol.stats.incumbents, sol.stats.elapsed
    ));
    if problems.is_empty() {
        line("consistent with the instance".to_string());
    } else {
        for p in &problems {
            line(format!("inconsistent: {p}"));
        }
    }
    print!("{out}");
    Ok(if problems.is_empty() {
        EXIT_OPTIMAL
    } else {
        EXIT_INVALID_SOLUTION
    })
}
