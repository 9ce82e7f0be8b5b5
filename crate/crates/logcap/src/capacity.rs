//! End-to-end capacity pipeline (configuration, reduction, solve, `exp(-c)`),
//! the a-posteriori error bound from the boundary maximum of the potential,
//! and analytic references: the exact two-disk capacity, the closed-form
//! approximations of the limit capacities, and the dust capacity bounds.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::extrapolate::{self, Extrapolation};
use crate::fastsum::{PotentialEngine, SummationBackend, SummationConfig, DEFAULT_EPSILON};
use crate::geometry::{
    charge_configuration, reduce_by_symmetry, CantorParameters, ChargeConfiguration, Family,
};
use crate::krylov::{self, KrylovMethod, SolverConfig};
use crate::operator::BOperator;
use crate::precond::{build_preconditioner, default_block_exponent};

/// Reduced sizes up to this use the direct backend under `BackendChoice::Auto`.
pub const AUTO_FAST_THRESHOLD: usize = 4096;

/// Gamma(1/4), for the exact capacity of the square.
const GAMMA_QUARTER: f64 = 3.625_609_908_221_908;

/// Logarithmic capacity of the unit square, `Gamma(1/4)^2 / (4 pi sqrt(pi))`.
pub fn square_capacity() -> f64 {
    GAMMA_QUARTER * GAMMA_QUARTER / (4.0 * PI * PI.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendChoice {
    /// Direct up to [`AUTO_FAST_THRESHOLD`] reduced points, hierarchical above.
    Auto,
    Direct,
    Hierarchical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondChoice {
    /// The family default exponent, skipped when the level is too small for
    /// it (`j > k - 1`).
    FamilyDefault,
    Off,
    /// A specific block exponent; out of range is an error.
    Exponent(usize),
}

#[derive(Clone, Copy, Debug)]
pub struct CapacityOptions {
    pub tol: f64,
    pub maxit: usize,
    pub backend: BackendChoice,
    pub epsilon: f64,
    pub precond: PrecondChoice,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            maxit: 400,
            backend: BackendChoice::Auto,
            epsilon: DEFAULT_EPSILON,
            precond: PrecondChoice::FamilyDefault,
        }
    }
}

/// Outcome of one capacity computation.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub params: CantorParameters,
    pub m: usize,
    /// The constant of the potential ansatz; the capacity estimate is
    /// `exp(-c)`.
    pub c: f64,
    pub capacity: f64,
    pub iterations: usize,
    /// Final relative preconditioned residual.
    pub relative_residual: f64,
    /// Final relative true residual of the reduced system.
    pub true_relative_residual: f64,
    pub backend: SummationBackend,
    pub preconditioner_exponent: Option<usize>,
    pub wall_time_s: f64,
    pub converged: bool,
    /// Solution of the reduced system (empty for a single disk).
    pub reduced_solution: Vec<f64>,
}

fn resolve_backend(choice: BackendChoice, reduced_len: usize) -> SummationBackend {
    match choice {
        BackendChoice::Direct => SummationBackend::Direct,
        BackendChoice::Hierarchical => SummationBackend::Hierarchical,
        BackendChoice::Auto => {
            if reduced_len <= AUTO_FAST_THRESHOLD {
                SummationBackend::Direct
            } else {
                SummationBackend::Hierarchical
            }
        }
    }
}

/// Runs the pipeline for one level of one family.
pub fn capacity_of_level(params: &CantorParameters, opts: &CapacityOptions) -> Result<SolveReport> {
    solve_configuration(charge_configuration(params)?, opts)
}

/// Runs the pipeline on an explicit configuration (used for the reference
/// two-disk geometry as well).
pub fn solve_configuration(
    cfg: ChargeConfiguration,
    opts: &CapacityOptions,
) -> Result<SolveReport> {
    let start = Instant::now();
    let m = cfg.count();
    let params = cfg.params;

    if m == 1 {
        // A single disk needs no solve: the potential constant is -log r.
        let c = -cfg.radius.ln();
        return Ok(SolveReport {
            params,
            m,
            c,
            capacity: (-c).exp(),
            iterations: 0,
            relative_residual: 0.0,
            true_relative_residual: 0.0,
            backend: SummationBackend::Direct,
            preconditioner_exponent: None,
            wall_time_s: start.elapsed().as_secs_f64(),
            converged: true,
            reduced_solution: Vec::new(),
        });
    }

    let red = reduce_by_symmetry(cfg)?;
    let n = red.len();
    let backend = resolve_backend(opts.backend, n);
    let sum_cfg = SummationConfig {
        backend,
        epsilon: opts.epsilon,
    };
    let op = BOperator::new(&red, sum_cfg)?;

    let preconditioner = match opts.precond {
        PrecondChoice::Off => None,
        PrecondChoice::FamilyDefault => {
            let j = default_block_exponent(params.family);
            if j < params.k as usize {
                Some(build_preconditioner(&red.source, j)?)
            } else {
                None
            }
        }
        PrecondChoice::Exponent(j) => Some(build_preconditioner(&red.source, j)?),
    };
    let preconditioner_exponent = preconditioner.as_ref().map(|p| p.block_exponent());

    let solver = SolverConfig {
        tol: opts.tol,
        maxit: opts.maxit,
        method: KrylovMethod::Gmres,
        preconditioner,
    };
    let rhs = vec![1.0; n];
    let res = krylov::gmres(&op, &rhs, &solver)?;

    let esum: f64 = res.solution.iter().sum();
    if esum <= 0.0 {
        return Err(Error::DegenerateSolution(esum));
    }
    let c = 1.0 / (2.0 * esum);

    Ok(SolveReport {
        params,
        m,
        c,
        capacity: (-c).exp(),
        iterations: res.iterations,
        relative_residual: *res.residual_history.last().unwrap(),
        true_relative_residual: res.true_relative_residual,
        backend,
        preconditioner_exponent,
        wall_time_s: start.elapsed().as_secs_f64(),
        converged: res.converged,
        reduced_solution: res.solution,
    })
}

/// Pipeline on the two-disk reference geometry with free radius.
pub fn two_disk_csm(r: f64, opts: &CapacityOptions) -> Result<SolveReport> {
    solve_configuration(ChargeConfiguration::two_disks(r)?, opts)
}

/// Recovers the charge vector of the full system from the reduced solution:
/// the full solution mirrors the reduced one, scaled so the charges sum
/// to one.
pub fn recover_charges(report: &SolveReport) -> Result<Vec<f64>> {
    if report.m == 1 {
        return Ok(vec![1.0]);
    }
    let half = report.m / 2;
    if report.reduced_solution.len() != half {
        return Err(Error::DimensionMismatch {
            expected: half,
            got: report.reduced_solution.len(),
        });
    }
    let y = &report.reduced_solution;
    let mut p = Vec::with_capacity(report.m);
    p.extend(y.iter().map(|v| report.c * v));
    p.extend(y.iter().rev().map(|v| report.c * v));
    Ok(p)
}

/// Sampled boundary maximum of the potential and the induced a-posteriori
/// capacity error bound `exp(-c) (M + M^2 exp(M) / 2)`.
#[derive(Clone, Debug)]
pub struct ErrorBoundReport {
    /// Max of `|h|` over the sampled boundary points.
    pub m_hat: f64,
    pub bound: f64,
    pub samples_per_circle: usize,
    /// Exact capacity when one is known for the configuration.
    pub reference_capacity: Option<f64>,
}

/// Default boundary sample count: 64 per circle, halved progressively above
/// 2^14 components, floored at 8.
pub fn default_boundary_samples(m: usize) -> usize {
    let mut samples = 64usize;
    let mut mm = m;
    while mm > (1 << 14) && samples > 8 {
        samples /= 2;
        mm /= 2;
    }
    samples.max(8)
}

/// Samples `h(zeta) = c + sum_j p_j log|zeta - w_j|` on every boundary
/// circle and reports the bound of the maximum-principle estimate.
pub fn error_bound(
    cfg: &ChargeConfiguration,
    charges: &[f64],
    c: f64,
    samples_per_circle: usize,
    sum_cfg: &SummationConfig,
) -> Result<ErrorBoundReport> {
    if samples_per_circle < 8 {
        return Err(Error::ParameterDomain(
            "need at least 8 samples per circle".into(),
        ));
    }
    let m = cfg.count();
    if charges.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: charges.len(),
        });
    }
    let engine = PotentialEngine::new(cfg.points.clone(), *sum_cfg)?;

    let mut m_hat = 0.0f64;
    // Batched targets keep memory flat for large configurations.
    let batch = (1 << 16) / samples_per_circle.max(1);
    let mut targets = Vec::with_capacity(batch * samples_per_circle);
    let flush = |targets: &mut Vec<Complex64>, m_hat: &mut f64| -> Result<()> {
        if targets.is_empty() {
            return Ok(());
        }
        let pots = engine.potentials_at(charges, targets)?;
        for p in pots {
            *m_hat = m_hat.max((c + p.re).abs());
        }
        targets.clear();
        Ok(())
    };
    for j in 0..m {
        for s in 0..samples_per_circle {
            let t = 2.0 * PI * s as f64 / samples_per_circle as f64;
            targets.push(cfg.points[j] + cfg.radius * Complex64::new(t.cos(), t.sin()));
        }
        if targets.len() >= batch * samples_per_circle {
            flush(&mut targets, &mut m_hat)?;
        }
    }
    flush(&mut targets, &mut m_hat)?;

    let bound = (-c).exp() * (m_hat + 0.5 * m_hat * m_hat * m_hat.exp());
    Ok(ErrorBoundReport {
        m_hat,
        bound,
        samples_per_circle,
        reference_capacity: None,
    })
}

/// Exact two-disk capacity (centers 1/6 and 5/6, radius `r <= 1/6`) via the
/// conformal module of the doubly connected complement.
#[derive(Clone, Copy, Debug)]
pub struct TwoDiskReference {
    pub r: f64,
    pub rho: f64,
    pub l: f64,
    /// Complete elliptic integral of the first kind with modulus `l^2`.
    pub k: f64,
    pub capacity_exact: f64,
    /// The closed-form pipeline value `sqrt(2r/3)`.
    pub capacity_csm: f64,
}

fn agm(mut a: f64, mut b: f64) -> f64 {
    for _ in 0..60 {
        let an = 0.5 * (a + b);
        let bn = (a * b).sqrt();
        if (an - bn).abs() <= f64::EPSILON * an.abs() {
            return 0.5 * (an + bn);
        }
        a = an;
        b = bn;
    }
    0.5 * (a + b)
}

/// Complete elliptic integral of the first kind,
/// `K(k) = int_0^1 dt / sqrt((1 - t^2)(1 - k^2 t^2))`, by the
/// arithmetic-geometric mean.
pub fn elliptic_k(modulus: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&modulus) {
        return Err(Error::ParameterDomain(format!(
            "elliptic modulus must lie in [0, 1), got {modulus}"
        )));
    }
    Ok(PI / (2.0 * agm(1.0, (1.0 - modulus * modulus).sqrt())))
}

pub fn two_disk_exact(r: f64) -> Result<TwoDiskReference> {
    if !(r > 0.0 && r <= 1.0 / 6.0) {
        return Err(Error::ParameterDomain(format!(
            "two-disk radius must satisfy 0 < r <= 1/6, got {r}"
        )));
    }
    let rho = 3.0 * r / (1.0 + (1.0 - 9.0 * r * r).sqrt());
    // Infinite product for the module, truncated when rho^(8k) < 1e-17.
    let mut l = 2.0 * rho;
    let mut k = 1u32;
    loop {
        let r8k = rho.powi(8 * k as i32);
        if r8k < 1e-17 || k > 200 {
            break;
        }
        let factor = (1.0 + r8k) / (1.0 + rho.powi(8 * k as i32 - 4));
        l *= factor * factor;
        k += 1;
    }
    let kk = elliptic_k(l * l)?;
    let capacity_exact =
        (2.0 * kk / (3.0 * PI)) * (1.0 - 9.0 * r * r).sqrt() * (2.0 * l * (1.0 + l * l)).sqrt();
    Ok(TwoDiskReference {
        r,
        rho,
        l,
        k: kk,
        capacity_exact,
        capacity_csm: (2.0 * r / 3.0).sqrt(),
    })
}

/// Closed-form computable bound on the two-disk capacity error,
/// `sqrt(r/6) log(3r/2 + 1) (1 + log(3r/2 + 1) sqrt(3r/2 + 1) / 4)`.
pub fn two_disk_error_bound_closed_form(r: f64) -> f64 {
    let t = (1.5 * r + 1.0).ln();
    (r / 6.0).sqrt() * t * (1.0 + 0.25 * t * (1.5 * r + 1.0).sqrt())
}

/// Closed-form approximation of the interval-family limit capacity,
/// `q(1-q) - (q^3/2)(1/2 - q)^(3/2)`.
pub fn cantor_f(q: f64) -> f64 {
    assert!(q > 0.0 && q <= 0.5, "cantor_f needs 0 < q <= 1/2");
    q * (1.0 - q) - 0.5 * q.powi(3) * (0.5 - q).powf(1.5)
}

/// Closed-form approximation of the dust-family limit capacity,
/// `sqrt(2) * cap(square) * (q(1-q))^(1/4)`.
pub fn dust_f(q: f64) -> f64 {
    assert!(q > 0.0 && q <= 0.5, "dust_f needs 0 < q <= 1/2");
    std::f64::consts::SQRT_2 * square_capacity() * (q * (1.0 - q)).powf(0.25)
}

/// Proven enclosure of the dust limit capacity,
/// `(1 - 2q) q^(1/3) <= cap <= sqrt(2) q^(1/3)`.
pub fn dust_bounds(q: f64) -> (f64, f64) {
    assert!(q > 0.0 && q < 0.5, "dust_bounds needs 0 < q < 1/2");
    let c = q.powf(1.0 / 3.0);
    ((1.0 - 2.0 * q) * c, std::f64::consts::SQRT_2 * c)
}

/// Extrapolates the limit from level reports, refusing unconverged inputs.
pub fn extrapolate_reports(
    reports: &[SolveReport],
    fit_range: Option<(u32, u32)>,
) -> Result<Extrapolation> {
    for r in reports {
        if !r.converged {
            return Err(Error::UnconvergedInput { k: r.params.k });
        }
    }
    let values: Vec<(u32, f64)> = reports.iter().map(|r| (r.params.k, r.capacity)).collect();
    extrapolate::extrapolate_values(&values, fit_range)
}

/// Computes a consecutive range of levels with shared options.
pub fn capacity_sweep(
    family: Family,
    q: f64,
    radius_factor: f64,
    k_range: std::ops::RangeInclusive<u32>,
    opts: &CapacityOptions,
) -> Result<Vec<SolveReport>> {
    let mut out = Vec::new();
    for k in k_range {
        let params = match family {
            Family::IntervalSet => CantorParameters::interval(q, k)?,
            Family::Dust => CantorParameters::dust_with_radius_factor(q, k, radius_factor)?,
        };
        out.push(capacity_of_level(&params, opts)?);
    }
    Ok(out)
}
