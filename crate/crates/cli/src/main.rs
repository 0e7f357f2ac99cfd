use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nsnewton::problems::SEED;
use nsnewton::{Method, SolverConfig, Vector};
use nsnewton_cli::commands::{self, SolveRequest};
use nsnewton_cli::{csv_trace, parse_vector, ConfigFile};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "nsnewton",
    version,
    about = "Newton methods and derivative diagnostics for nonsmooth equations"
)]
struct Cli {
    /// `key = value` file mirroring the long flags; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one Newton iteration and emit its run record.
    Solve(SolveArgs),
    /// Derivative sets, semismoothness and regularity at a point.
    Analyze(AnalyzeArgs),
    /// Kantorovich check, inclusion suite or residual curve.
    Check(CheckArgs),
    /// Solve every (problem, method, start) triple in parallel.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct Output {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    method: Option<Method>,
    /// Comma-separated start; defaults to the problem's first recommended start.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Reference root for error and rate diagnostics.
    #[arg(long, allow_hyphen_values = true)]
    root: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Record wall-clock start and end times.
    #[arg(long)]
    timestamps: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    problem: Option<String>,
    /// Comma-separated point; defaults to the first known root.
    #[arg(long, allow_hyphen_values = true)]
    point: Option<String>,
    /// Direction to probe (repeatable); defaults to ±e_i and ±diagonal.
    #[arg(long, allow_hyphen_values = true)]
    direction: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("kind").required(true).args(["kantorovich", "inclusions", "h2"])))]
struct CheckArgs {
    #[arg(long)]
    kantorovich: bool,
    #[arg(long)]
    inclusions: bool,
    /// Residual curve of the first-order model at the root.
    #[arg(long)]
    h2: bool,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Radius of the Kantorovich ball.
    #[arg(long)]
    r: Option<f64>,
    /// Random (x, z) pairs for the inclusion suite.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Restrict to these problems (repeatable); defaults to the whole corpus.
    #[arg(long)]
    problem: Vec<String>,
    /// Restrict to these methods (repeatable).
    #[arg(long)]
    method: Vec<Method>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    output: Output,
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn required(value: Option<String>, flag: &str) -> Result<String> {
    value.with_context(|| format!("--{flag} is required"))
}

fn vector(value: Option<String>) -> Result<Option<Vector>> {
    value.map(|s| parse_vector(&s)).transpose()
}

fn format_of(cfg: &ConfigFile, flag: Option<Format>) -> Result<Format> {
    match flag {
        Some(f) => Ok(f),
        None => match cfg.raw("format") {
            None | Some("json") => Ok(Format::Json),
            Some("csv") => Ok(Format::Csv),
            Some(other) => bail!("config key 'format': unknown format '{other}'"),
        },
    }
}

fn solver_config(
    cfg: &ConfigFile,
    method: Option<Method>,
    tol: Option<f64>,
    max_iter: Option<usize>,
) -> Result<SolverConfig> {
    let mut c =
        SolverConfig::with_method(cfg.merge(method, "method")?.unwrap_or(Method::Graphical));
    if let Some(t) = cfg.merge(tol, "tol")? {
        c.tol_residual = t;
    }
    if let Some(m) = cfg.merge(max_iter, "max-iter")? {
        c.max_iter = m;
    }
    c.validate()?;
    Ok(c)
}

fn run_solve(cfg: &ConfigFile, a: SolveArgs) -> Result<u8> {
    let req = SolveRequest {
        problem: required(cfg.merge(a.problem, "problem")?, "problem")?,
        x0: vector(cfg.merge(a.x0, "x0")?)?,
        root: vector(cfg.merge(a.root, "root")?)?,
        config: solver_config(cfg, a.method, a.tol, a.max_iter)?,
        seed: cfg.merge(a.seed, "seed")?.unwrap_or(SEED),
        timestamps: a.timestamps || cfg.get::<bool>("timestamps")?.unwrap_or(false),
    };
    let record = commands::solve(&req)?;
    let out = cfg.merge(a.output.out, "out")?;
    let text = match format_of(cfg, a.output.format)? {
        Format::Json => json(&record)?,
        Format::Csv => csv_trace(&record),
    };
    emit(&text, out.as_ref())?;
    Ok(if record.converged() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn run_analyze(cfg: &ConfigFile, a: AnalyzeArgs) -> Result<u8> {
    let id = required(cfg.merge(a.problem, "problem")?, "problem")?;
    let point = vector(cfg.merge(a.point, "point")?)?;
    let dirs = if a.direction.is_empty() {
        None
    } else {
        Some(
            a.direction
                .iter()
                .map(|d| parse_vector(d))
                .collect::<Result<Vec<_>>>()?,
        )
    };
    let report = commands::analyze(&id, point, dirs)?;
    emit(&json(&report)?, cfg.merge(a.out, "out")?.as_ref())?;
    Ok(EXIT_OK)
}

fn run_check(cfg: &ConfigFile, a: CheckArgs) -> Result<u8> {
    let id = required(cfg.merge(a.problem, "problem")?, "problem")?;
    let out = cfg.merge(a.out, "out")?;
    let (text, ok) = if a.kantorovich {
        let r = cfg.merge(a.r, "r")?.unwrap_or(1.0);
        let rep = commands::check_kantorovich(&id, vector(cfg.merge(a.x0, "x0")?)?, r)?;
        (json(&rep)?, rep.passes)
    } else if a.inclusions {
        let samples = cfg.merge(a.samples, "samples")?.unwrap_or(50);
        let seed = cfg.merge(a.seed, "seed")?.unwrap_or(SEED);
        let rep = commands::check_inclusions(&id, samples, seed)?;
        (json(&rep)?, rep.holds)
    } else {
        (json(&commands::check_h2(&id)?)?, true)
    };
    emit(&text, out.as_ref())?;
    Ok(if ok { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn run_bench(cfg: &ConfigFile, a: BenchArgs) -> Result<u8> {
    let base = solver_config(cfg, None, a.tol, a.max_iter)?;
    let methods = if a.method.is_empty() {
        Method::ALL.to_vec()
    } else {
        a.method
    };
    let seed = cfg.merge(a.seed, "seed")?.unwrap_or(SEED);
    let entries = commands::bench(&a.problem, &methods, &base, seed)?;
    let text = match format_of(cfg, a.output.format)? {
        Format::Json => json(&entries)?,
        Format::Csv => commands::bench_csv(&entries),
    };
    emit(&text, cfg.merge(a.output.out, "out")?.as_ref())?;
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Solve(a) => run_solve(&cfg, a),
        Command::Analyze(a) => run_analyze(&cfg, a),
        Command::Check(a) => run_check(&cfg, a),
        Command::Bench(a) => run_bench(&cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NSNEWTON_LOG", "off")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
