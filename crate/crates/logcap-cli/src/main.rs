//! Command-line driver: capacity computations, level sweeps, extrapolation
//! to the fractal limit, validation checks, and benchmarks.
//!
//! Exit codes: 0 success, 1 usage or parameter error, 2 unconverged solve
//! (or unconverged input), 3 non-geometric difference sequence, 4 failed
//! validation check.

mod checks;
mod record;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use logcap::capacity::{
    self, default_boundary_samples, error_bound, BackendChoice, CapacityOptions, PrecondChoice,
};
use logcap::error::Error as LogcapError;
use logcap::extrapolate::Direction;
use logcap::fastsum::{SummationBackend, SummationConfig};
use logcap::geometry::{charge_configuration, CantorParameters, Family};

use record::{LimitRecord, RunRecord, SCHEMA_VERSION};

#[derive(Parser)]
#[command(
    name = "logcap",
    version,
    about = "Logarithmic capacity of generalized Cantor sets and Cantor dust"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the capacity of a single level.
    Compute(ComputeArgs),
    /// Compute a consecutive range of levels.
    Sweep(SweepArgs),
    /// Extrapolate the limit capacity from level records.
    Extrapolate(ExtrapolateArgs),
    /// Run validation checks against analytic references.
    Validate(checks::ValidateArgs),
    /// Time solves and the summation backends.
    Bench(checks::BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Cantor,
    Dust,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Cantor => Family::IntervalSet,
            FamilyArg::Dust => Family::Dust,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Auto,
    Direct,
    Fast,
}

impl From<BackendArg> for BackendChoice {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Auto => BackendChoice::Auto,
            BackendArg::Direct => BackendChoice::Direct,
            BackendArg::Fast => BackendChoice::Hierarchical,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Parses `q` given as an exact rational ("1/3", "9/24") or a decimal.
fn parse_q(s: &str) -> Result<f64, String> {
    let v = if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num
            .trim()
            .parse()
            .map_err(|e| format!("bad numerator {num:?}: {e}"))?;
        let d: f64 = den
            .trim()
            .parse()
            .map_err(|e| format!("bad denominator {den:?}: {e}"))?;
        if d == 0.0 {
            return Err("zero denominator".into());
        }
        n / d
    } else {
        s.parse::<f64>()
            .map_err(|e| format!("bad ratio {s:?}: {e}"))?
    };
    if !(v > 0.0 && v < 0.5) {
        return Err(format!("ratio must satisfy 0 < q < 1/2, got {v}"));
    }
    Ok(v)
}

fn parse_fit_range(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("fit range must look like 5:19, got {s:?}"))?;
    let lo: u32 = a
        .trim()
        .parse()
        .map_err(|e| format!("bad range start: {e}"))?;
    let hi: u32 = b
        .trim()
        .parse()
        .map_err(|e| format!("bad range end: {e}"))?;
    if lo > hi {
        return Err(format!("empty fit range {lo}:{hi}"));
    }
    Ok((lo, hi))
}

#[derive(Args, Clone)]
struct SolveFlags {
    /// Point family.
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Contraction ratio, rational ("1/3") or decimal.
    #[arg(long, value_parser = parse_q)]
    q: f64,
    /// Preconditioner block exponent (default: 4 for cantor, 2 for dust).
    #[arg(long)]
    j: Option<usize>,
    /// Disable the preconditioner.
    #[arg(long)]
    no_precond: bool,
    /// Summation backend.
    #[arg(long, value_enum, default_value = "auto")]
    backend: BackendArg,
    /// Relative residual tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Iteration cap.
    #[arg(long, default_value_t = 400)]
    maxit: usize,
    /// Disk radius scaling for the dust family, in [1, sqrt(2)).
    #[arg(long, default_value_t = 1.0)]
    radius_factor: f64,
    /// Also sample the boundary potential and report the error bound.
    #[arg(long)]
    bound: bool,
    /// Boundary samples per circle (default: scaled to the level).
    #[arg(long)]
    samples: Option<usize>,
    /// Output format.
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Output path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ComputeArgs {
    #[command(flatten)]
    flags: SolveFlags,
    /// Level.
    #[arg(long)]
    k: u32,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    flags: SolveFlags,
    #[arg(long)]
    k_min: u32,
    #[arg(long)]
    k_max: u32,
    /// Emit (k, capacity) pairs on stderr for external plotting.
    #[arg(long)]
    emit_pairs: bool,
}

#[derive(Args)]
struct ExtrapolateArgs {
    /// Level records to extrapolate (CSV or JSON, as written by sweep).
    #[arg(long, conflicts_with_all = ["k_min", "k_max", "family", "q"])]
    input: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "input")]
    family: Option<FamilyArg>,
    #[arg(long, value_parser = parse_q, required_unless_present = "input")]
    q: Option<f64>,
    #[arg(long, required_unless_present = "input")]
    k_min: Option<u32>,
    #[arg(long, required_unless_present = "input")]
    k_max: Option<u32>,
    #[arg(long)]
    j: Option<usize>,
    #[arg(long)]
    no_precond: bool,
    #[arg(long, value_enum, default_value = "auto")]
    backend: BackendArg,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 400)]
    maxit: usize,
    #[arg(long, default_value_t = 1.0)]
    radius_factor: f64,
    /// Restrict the fit to difference indices "a:b".
    #[arg(long, value_parser = parse_fit_range)]
    fit_range: Option<(u32, u32)>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

struct CliFailure {
    message: String,
    code: i32,
}

impl CliFailure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 1,
        }
    }
}

impl From<LogcapError> for CliFailure {
    fn from(e: LogcapError) -> Self {
        let code = match &e {
            LogcapError::MixedSignDifferences { .. }
            | LogcapError::NotDecaying { .. }
            | LogcapError::ZeroDifference { .. } => 3,
            LogcapError::UnconvergedInput { .. } => 2,
            _ => 1,
        };
        Self {
            message: e.to_string(),
            code,
        }
    }
}

impl From<std::io::Error> for CliFailure {
    fn from(e: std::io::Error) -> Self {
        Self {
            message: e.to_string(),
            code: 1,
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    std::process::exit(0);
                }
                _ => {
                    eprint!("{e}");
                    std::process::exit(1);
                }
            }
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32, CliFailure> {
    match cli.cmd {
        Cmd::Compute(args) => cmd_compute(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Extrapolate(args) => cmd_extrapolate(args),
        Cmd::Validate(args) => checks::cmd_validate(args),
        Cmd::Bench(args) => checks::cmd_bench(args),
    }
}

fn build_params(flags: &SolveFlags, k: u32) -> Result<CantorParameters, CliFailure> {
    let family: Family = flags.family.into();
    match family {
        Family::IntervalSet => {
            if flags.radius_factor != 1.0 {
                return Err(CliFailure::usage(
                    "--radius-factor applies to the dust family only",
                ));
            }
            CantorParameters::interval(flags.q, k).map_err(Into::into)
        }
        Family::Dust => CantorParameters::dust_with_radius_factor(flags.q, k, flags.radius_factor)
            .map_err(Into::into),
    }
}

fn capacity_options(flags: &SolveFlags) -> Result<CapacityOptions, CliFailure> {
    if flags.no_precond && flags.j.is_some() {
        return Err(CliFailure::usage("--no-precond conflicts with --j"));
    }
    Ok(CapacityOptions {
        tol: flags.tol,
        maxit: flags.maxit,
        backend: flags.backend.into(),
        epsilon: logcap::fastsum::DEFAULT_EPSILON,
        precond: if flags.no_precond {
            PrecondChoice::Off
        } else {
            match flags.j {
                Some(j) => PrecondChoice::Exponent(j),
                None => PrecondChoice::FamilyDefault,
            }
        },
    })
}

fn run_level(flags: &SolveFlags, k: u32) -> Result<RunRecord, CliFailure> {
    let params = build_params(flags, k)?;
    let opts = capacity_options(flags)?;
    let report = capacity::capacity_of_level(&params, &opts)?;
    let mut rec = RunRecord::from_report(&report, flags.tol);
    if flags.bound {
        let cfg = charge_configuration(&params)?;
        let charges = capacity::recover_charges(&report)?;
        let samples = flags
            .samples
            .unwrap_or_else(|| default_boundary_samples(report.m));
        let backend = match report.backend {
            SummationBackend::Direct => SummationConfig::direct(),
            SummationBackend::Hierarchical => SummationConfig::hierarchical(),
        };
        let eb = error_bound(&cfg, &charges, report.c, samples, &backend)?;
        rec.m_hat = Some(eb.m_hat);
        rec.error_bound = Some(eb.bound);
    }
    Ok(rec)
}

fn emit_records(
    records: &[RunRecord],
    format: FormatArg,
    out: &Option<PathBuf>,
) -> Result<(), CliFailure> {
    let mut buf = Vec::new();
    match format {
        FormatArg::Csv => record::write_csv(&mut buf, records)?,
        FormatArg::Json => record::write_json(&mut buf, records)?,
    }
    match out {
        Some(path) => std::fs::write(path, buf)?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

fn cmd_compute(args: ComputeArgs) -> Result<i32, CliFailure> {
    let rec = run_level(&args.flags, args.k)?;
    let converged = rec.converged;
    emit_records(
        std::slice::from_ref(&rec),
        args.flags.format,
        &args.flags.out,
    )?;
    Ok(if converged { 0 } else { 2 })
}

fn cmd_sweep(args: SweepArgs) -> Result<i32, CliFailure> {
    if args.k_min > args.k_max {
        return Err(CliFailure::usage(format!(
            "empty level range: k-min {} > k-max {}",
            args.k_min, args.k_max
        )));
    }
    let mut records = Vec::new();
    for k in args.k_min..=args.k_max {
        eprintln!("level k = {k} ...");
        records.push(run_level(&args.flags, k)?);
    }
    if args.emit_pairs {
        for r in &records {
            eprintln!("{} {:.16e}", r.k, r.capacity);
        }
    }
    let all_converged = records.iter().all(|r| r.converged);
    emit_records(&records, args.flags.format, &args.flags.out)?;
    Ok(if all_converged { 0 } else { 2 })
}

fn cmd_extrapolate(args: ExtrapolateArgs) -> Result<i32, CliFailure> {
    let records: Vec<RunRecord> = match &args.input {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            record::parse_records(&text).map_err(CliFailure::usage)?
        }
        None => {
            let flags = SolveFlags {
                family: args.family.unwrap(),
                q: args.q.unwrap(),
                j: args.j,
                no_precond: args.no_precond,
                backend: args.backend,
                tol: args.tol,
                maxit: args.maxit,
                radius_factor: args.radius_factor,
                bound: false,
                samples: None,
                format: args.format,
                out: None,
            };
            let (k_min, k_max) = (args.k_min.unwrap(), args.k_max.unwrap());
            if k_min > k_max {
                return Err(CliFailure::usage("empty level range"));
            }
            let mut records = Vec::new();
            for k in k_min..=k_max {
                eprintln!("level k = {k} ...");
                records.push(run_level(&flags, k)?);
            }
            records
        }
    };
    if records.len() < 4 {
        return Err(CliFailure::usage(format!(
            "extrapolation needs at least 4 levels, got {}",
            records.len()
        )));
    }
    for r in &records {
        if !r.converged {
            return Err(CliFailure::from(LogcapError::UnconvergedInput { k: r.k }));
        }
    }
    let values: Vec<(u32, f64)> = records.iter().map(|r| (r.k, r.capacity)).collect();
    let ex = logcap::extrapolate::extrapolate_values(&values, args.fit_range)?;
    let rec = LimitRecord {
        schema_version: SCHEMA_VERSION.into(),
        family: records[0].family.clone(),
        q: records[0].q,
        k_first: values[0].0,
        k_last: values[values.len() - 1].0,
        fit_first: ex.fit.k_fit_first,
        fit_last: ex.fit.k_fit_last,
        p1: ex.fit.p1,
        p2: ex.fit.p2,
        direction: match ex.fit.direction {
            Direction::Decreasing => "decreasing".into(),
            Direction::Increasing => "increasing".into(),
        },
        cutoff_k: ex.fit.cutoff_k,
        max_log_residual: ex.fit.max_log_residual,
        limit: ex.limit,
    };
    let mut buf = Vec::new();
    record::write_limit(&mut buf, &rec, matches!(args.format, FormatArg::Json))?;
    match &args.out {
        Some(path) => std::fs::write(path, buf)?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(0)
}
