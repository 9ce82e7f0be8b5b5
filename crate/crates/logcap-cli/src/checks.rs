//! The `validate` and `bench` subcommands: analytic cross-checks at desk
//! scale and timing harnesses.

use std::time::Instant;

use clap::{Args, ValueEnum};
use nalgebra::DMatrix;
use num_complex::Complex64;

use logcap::capacity::{
    error_bound, recover_charges, two_disk_csm, two_disk_exact, CapacityOptions,
};
use logcap::fastsum::{log_potential_direct, log_potential_fast, SummationConfig};
use logcap::geometry::{
    cantor_dust_points, cantor_interval_points, reduce_by_symmetry, CantorParameters,
    ChargeConfiguration,
};
use logcap::operator::{assemble_dense_b, check_structure};
use logcap::precond::build_preconditioner;

use crate::{parse_q, CliFailure};

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum CheckName {
    All,
    TwoDisk,
    PrecondRatio,
    Structure,
    Backend,
}

#[derive(Args)]
pub struct ValidateArgs {
    /// Which check to run.
    #[arg(long, value_enum, default_value = "all")]
    check: CheckName,
    /// Two-disk radius (default: a grid of radii).
    #[arg(long)]
    r: Option<f64>,
    /// Full-system size for the condition-ratio check (a power of two).
    #[arg(long, default_value_t = 1024)]
    m: usize,
    /// Preconditioner block exponent for the condition-ratio check.
    #[arg(long, default_value_t = 4)]
    j: usize,
    /// Contraction ratio for the structure/backend checks.
    #[arg(long, value_parser = parse_q)]
    q: Option<f64>,
    /// Level for the structure/backend checks.
    #[arg(long)]
    k: Option<u32>,
}

struct CheckRun {
    failures: usize,
}

impl CheckRun {
    fn new() -> Self {
        Self { failures: 0 }
    }

    fn report(&mut self, name: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {detail}");
        if !pass {
            self.failures += 1;
        }
    }
}

pub fn cmd_validate(args: ValidateArgs) -> Result<i32, CliFailure> {
    let mut run = CheckRun::new();
    if matches!(args.check, CheckName::All | CheckName::TwoDisk) {
        check_two_disk(&mut run, args.r)?;
    }
    if matches!(args.check, CheckName::All | CheckName::PrecondRatio) {
        check_precond_ratio(&mut run, args.m, args.j, args.q.unwrap_or(1.0 / 3.0))?;
    }
    if matches!(args.check, CheckName::All | CheckName::Structure) {
        check_structure_sweep(&mut run, args.q, args.k)?;
    }
    if matches!(args.check, CheckName::All | CheckName::Backend) {
        check_backend(&mut run, args.k.unwrap_or(14))?;
    }
    Ok(if run.failures == 0 { 0 } else { 4 })
}

fn check_two_disk(run: &mut CheckRun, r: Option<f64>) -> Result<(), CliFailure> {
    let radii = match r {
        Some(r) => vec![r],
        None => vec![1e-7, 1e-5, 1e-3, 1e-2],
    };
    let opts = CapacityOptions::default();
    for r in &radii {
        let rep = two_disk_csm(*r, &opts)?;
        let csm = (2.0 * r / 3.0).sqrt();
        let rel = (rep.capacity - csm).abs() / csm;
        run.report(
            "two-disk-pipeline",
            rel <= 1e-13,
            format!("r={r:.1e} relative deviation {rel:.2e} (expected <= 1e-13)"),
        );
        let exact = two_disk_exact(*r)?;
        let gap = (exact.capacity_exact - csm).abs();
        if *r <= 1e-6 {
            run.report(
                "two-disk-exact-agreement",
                gap <= 1e-10,
                format!("r={r:.1e} |exact - estimate| = {gap:.2e} (expected <= 1e-10)"),
            );
        }
        let charges = recover_charges(&rep)?;
        let cfg = ChargeConfiguration::two_disks(*r)?;
        let eb = error_bound(&cfg, &charges, rep.c, 128, &SummationConfig::direct())?;
        let err = (exact.capacity_exact - rep.capacity).abs();
        run.report(
            "two-disk-bound-sound",
            err <= eb.bound,
            format!("r={r:.1e} error {err:.2e} within bound {:.2e}", eb.bound),
        );
    }
    if r.is_none() {
        let exact = two_disk_exact(1.0 / 6.0)?;
        let gap = (exact.capacity_exact - exact.capacity_csm).abs();
        run.report(
            "two-disk-worst-radius",
            (0.007..=0.013).contains(&gap),
            format!("r=1/6 |exact - estimate| = {gap:.4} (expected about 0.01)"),
        );
    }
    Ok(())
}

fn condition_number(mat: &DMatrix<f64>) -> f64 {
    let sv = mat.clone().svd(false, false).singular_values;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for s in sv.iter() {
        lo = lo.min(*s);
        hi = hi.max(*s);
    }
    hi / lo
}

fn check_precond_ratio(run: &mut CheckRun, m: usize, j: usize, q: f64) -> Result<(), CliFailure> {
    if !m.is_power_of_two() || m < 4 {
        return Err(CliFailure::usage("--m must be a power of two, at least 4"));
    }
    let k = m.trailing_zeros();
    let params = CantorParameters::interval(q, k)?;
    let cfg = cantor_interval_points(&params)?;
    let pre = build_preconditioner(&cfg, j)?;
    let red = reduce_by_symmetry(cfg)?;
    let b = assemble_dense_b(&red)?;
    let n = b.nrows();
    let mut pinv_b = DMatrix::zeros(n, n);
    for col in 0..n {
        let v: Vec<f64> = (0..n).map(|row| b[(row, col)]).collect();
        let solved = pre.apply_inverse(&v)?;
        for row in 0..n {
            pinv_b[(row, col)] = solved[row];
        }
    }
    let kb = condition_number(&b);
    let kpb = condition_number(&pinv_b);
    let ratio = kpb / kb;
    // Observed behavior: the ratio tracks 2^-(j+1/2); tested as an
    // inequality with slack.
    let threshold = 1.36 * (2.0f64).powf(-(j as f64 + 0.5));
    run.report(
        "precond-ratio",
        ratio <= threshold,
        format!(
            "m={m} j={j}: kappa(B)={kb:.3e}, kappa(P^-1 B)={kpb:.3e}, ratio {ratio:.4} <= {threshold:.4}"
        ),
    );
    Ok(())
}

fn check_structure_sweep(
    run: &mut CheckRun,
    q: Option<f64>,
    k: Option<u32>,
) -> Result<(), CliFailure> {
    let qs = match q {
        Some(q) => vec![q],
        None => vec![0.1, 1.0 / 3.0, 0.45],
    };
    let ks = match k {
        Some(k) => vec![k],
        None => (2..=8).collect(),
    };
    for &q in &qs {
        for &k in &ks {
            let cfg = cantor_interval_points(&CantorParameters::interval(q, k)?)?;
            match check_structure(&cfg) {
                Ok(rep) => run.report(
                    "structure-interval",
                    true,
                    format!(
                        "q={q:.4} k={k}: entries in [{:.4}, {:.4}], decay verified",
                        rep.a_entry_min, rep.a_entry_max
                    ),
                ),
                Err(e) => run.report("structure-interval", false, format!("q={q:.4} k={k}: {e}")),
            }
        }
    }
    // Dust mode verifies the reduction identity only.
    let cfg = cantor_dust_points(&CantorParameters::dust(1.0 / 3.0, 3)?)?;
    match check_structure(&cfg) {
        Ok(rep) => run.report(
            "structure-dust",
            true,
            format!(
                "q=1/3 k=3: block identity deviation {:.2e}",
                rep.block_identity_dev.unwrap_or(f64::NAN)
            ),
        ),
        Err(e) => run.report("structure-dust", false, format!("q=1/3 k=3: {e}")),
    }
    Ok(())
}

fn lcg_sequence(n: usize, mut state: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        out.push((state >> 11) as f64 / (1u64 << 53) as f64);
    }
    out
}

fn check_backend(run: &mut CheckRun, k: u32) -> Result<(), CliFailure> {
    let params = CantorParameters::interval(1.0 / 3.0, k)?;
    let red = reduce_by_symmetry(cantor_interval_points(&params)?)?;
    let z = red.zpoints;
    let n = z.len();
    let mut y: Vec<f64> = lcg_sequence(n, 0x5DEECE66D)
        .into_iter()
        .map(|u| 2.0 * u - 1.0)
        .collect();
    let norm1: f64 = y.iter().map(|v| v.abs()).sum();
    y.iter_mut().for_each(|v| *v /= norm1);
    let direct = log_potential_direct(&z, &y)?;
    let fast = log_potential_fast(&z, &y, &SummationConfig::hierarchical())?;
    let dev = direct
        .iter()
        .zip(&fast)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    run.report(
        "backend-agreement",
        dev <= 1e-11,
        format!("level-{k} points (n={n}): max |fast - direct| = {dev:.2e} (expected <= 1e-11)"),
    );
    Ok(())
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "cantor")]
    family: crate::FamilyArg,
    #[arg(long, value_parser = parse_q, default_value = "1/3")]
    q: f64,
    #[arg(long, default_value_t = 5)]
    k_min: u32,
    #[arg(long, default_value_t = 12)]
    k_max: u32,
    #[arg(long, value_enum, default_value = "auto")]
    backend: crate::BackendArg,
    /// Also time one summation of each backend on random points and report
    /// the scaling exponent of the fast backend.
    #[arg(long)]
    matvec_scaling: bool,
    #[arg(long, default_value_t = 10_000)]
    n1: usize,
    #[arg(long, default_value_t = 100_000)]
    n2: usize,
}

/// Reduced sizes above this refuse the direct backend in benchmarks.
const DIRECT_BENCH_CAP: usize = 1 << 15;

pub fn cmd_bench(args: BenchArgs) -> Result<i32, CliFailure> {
    if args.k_min > args.k_max {
        return Err(CliFailure::usage("empty level range"));
    }
    let family: logcap::geometry::Family = args.family.into();
    println!("family,q,k,m,backend,iterations,wall_time_s");
    for k in args.k_min..=args.k_max {
        let params = match family {
            logcap::geometry::Family::IntervalSet => CantorParameters::interval(args.q, k)?,
            logcap::geometry::Family::Dust => CantorParameters::dust(args.q, k)?,
        };
        let half = params.count() / 2;
        if matches!(args.backend, crate::BackendArg::Direct) && half > DIRECT_BENCH_CAP {
            return Err(CliFailure::usage(format!(
                "direct backend refused for reduced size {half} > {DIRECT_BENCH_CAP}; use --backend fast"
            )));
        }
        let opts = CapacityOptions {
            backend: args.backend.into(),
            ..Default::default()
        };
        let rep = logcap::capacity::capacity_of_level(&params, &opts)?;
        println!(
            "{},{},{},{},{},{},{:.3}",
            family.as_str(),
            args.q,
            k,
            rep.m,
            rep.backend.as_str(),
            rep.iterations,
            rep.wall_time_s
        );
    }

    if args.matvec_scaling {
        let time_fast = |n: usize| -> Result<f64, CliFailure> {
            let re = lcg_sequence(n, 17);
            let im = lcg_sequence(n, 39);
            let z: Vec<Complex64> = re
                .into_iter()
                .zip(im)
                .map(|(a, b)| Complex64::new(a, b))
                .collect();
            let y = lcg_sequence(n, 71);
            let engine = logcap::fastsum::PotentialEngine::new(z, SummationConfig::hierarchical())?;
            let start = Instant::now();
            let _ = engine.mutual_real(&y)?;
            Ok(start.elapsed().as_secs_f64())
        };
        // Warm-up pass at the small size stabilizes the measurement.
        let _ = time_fast(args.n1)?;
        let t1 = time_fast(args.n1)?;
        let t2 = time_fast(args.n2)?;
        let exponent = (t2 / t1).ln() / (args.n2 as f64 / args.n1 as f64).ln();
        println!(
            "matvec-scaling,n1={},t1={t1:.3}s,n2={},t2={t2:.3}s,exponent={exponent:.3}",
            args.n1, args.n2
        );
    }
    Ok(0)
}
