//! The collocation matrices: dense assembly for oracle-scale sizes and the
//! matrix-free application of the reduced operator through fast summation.
//!
//! The full matrix has entries `-log r` on the diagonal and
//! `-log|w_i - w_j|` off it; the symmetry-reduced matrix has diagonal
//! `-log|2 r sqrt(z_i)|` and off-diagonal `-log|z_i - z_j|`. Dense assembly
//! is capped and used only by oracles and validation; every solve path above
//! the cap is matrix-free.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fastsum::{PotentialEngine, SummationConfig};
use crate::geometry::{ChargeConfiguration, Family, ReducedSystem};
use crate::krylov::LinearOp;

/// Largest matrix order assembled densely.
pub const DENSE_CAP: usize = 4096;

/// Entry `(i, j)` (0-based) of the full collocation matrix.
pub fn entry_a(cfg: &ChargeConfiguration, i: usize, j: usize) -> f64 {
    let m = cfg.count();
    assert!(i < m && j < m, "entry_a index out of bounds");
    if i == j {
        -cfg.radius.ln()
    } else {
        -(cfg.points[i] - cfg.points[j]).norm().ln()
    }
}

/// Dense full matrix; exactly symmetric by construction.
pub fn assemble_dense_a(cfg: &ChargeConfiguration) -> Result<DMatrix<f64>> {
    let m = cfg.count();
    if m > DENSE_CAP {
        return Err(Error::DenseCapExceeded {
            size: m,
            cap: DENSE_CAP,
        });
    }
    let diag = -cfg.radius.ln();
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        a[(i, i)] = diag;
        for j in i + 1..m {
            let v = -(cfg.points[i] - cfg.points[j]).norm().ln();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(a)
}

/// Dense reduced matrix; exactly symmetric by construction.
pub fn assemble_dense_b(red: &ReducedSystem) -> Result<DMatrix<f64>> {
    let n = red.len();
    if n > DENSE_CAP {
        return Err(Error::DenseCapExceeded {
            size: n,
            cap: DENSE_CAP,
        });
    }
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        b[(i, i)] = red.diag[i];
        for j in i + 1..n {
            let v = -(red.zpoints[i] - red.zpoints[j]).norm().ln();
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    Ok(b)
}

/// Matrix-free reduced operator: `(B y)_j = -log|2 r sqrt(z_j)| y_j -
/// Re sum_{l != j} y_l log(z_j - z_l)`, the mutual sum going through the
/// configured summation backend.
pub struct BOperator {
    diag: Vec<f64>,
    engine: PotentialEngine,
}

impl BOperator {
    pub fn new(red: &ReducedSystem, cfg: SummationConfig) -> Result<Self> {
        let engine = PotentialEngine::new(red.zpoints.clone(), cfg)?;
        Ok(Self {
            diag: red.diag.clone(),
            engine,
        })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn engine(&self) -> &PotentialEngine {
        &self.engine
    }

    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        let pot = self.engine.mutual_real(y)?;
        Ok(self
            .diag
            .iter()
            .zip(y)
            .zip(pot)
            .map(|((d, yj), p)| d * yj - p)
            .collect())
    }
}

impl LinearOp for BOperator {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let v = BOperator::apply(self, x).expect("reduced operator application failed");
        out.copy_from_slice(&v);
    }
}

/// Which structural checks to run.
#[derive(Clone, Copy, Debug)]
pub struct StructureOptions {
    /// Entry bounds and monotone decay of the full matrix (interval family).
    pub check_a: bool,
    /// Entry bounds and monotone decay of the reduced matrix (interval
    /// family, needs `k >= 2`).
    pub check_b: bool,
    /// Dense verification that the reduced matrix equals the sum of the
    /// leading block and the column-reversed off-diagonal block.
    pub check_block_identity: bool,
}

impl StructureOptions {
    /// Everything applicable to the given configuration.
    pub fn auto_for(cfg: &ChargeConfiguration) -> Self {
        let interval = cfg.params.family == Family::IntervalSet;
        Self {
            check_a: interval && cfg.params.k >= 1,
            check_b: interval && cfg.params.k >= 2,
            check_block_identity: true,
        }
    }
}

/// Outcome of the structural checks, with the measured extremes.
#[derive(Clone, Debug)]
pub struct StructureReport {
    pub family: Family,
    pub m: usize,
    pub a_checked: bool,
    pub a_entry_min: f64,
    pub a_entry_max: f64,
    pub a_lower_bound: f64,
    pub a_upper_bound: f64,
    pub b_checked: bool,
    pub b_entry_min: f64,
    pub b_entry_max: f64,
    pub b_lower_bound: f64,
    pub b_upper_bound: f64,
    /// Max entrywise deviation of the block identity, when checked.
    pub block_identity_dev: Option<f64>,
}

/// Runs every check applicable to the configuration; see
/// [`check_structure_with`].
pub fn check_structure(cfg: &ChargeConfiguration) -> Result<StructureReport> {
    check_structure_with(cfg, StructureOptions::auto_for(cfg))
}

/// Validates the structural properties of the collocation matrices densely:
/// entry bounds and monotone decay away from the diagonal for the interval
/// family, and the block identity relating the reduced matrix to the full
/// one. Any violation is an error carrying the witnessing indices.
///
/// For the dust family the interval entry bounds do not carry over, so only
/// the block identity (and with it the reduction formula for the entries) is
/// verified there.
pub fn check_structure_with(
    cfg: &ChargeConfiguration,
    opts: StructureOptions,
) -> Result<StructureReport> {
    let m = cfg.count();
    let interval = cfg.params.family == Family::IntervalSet;
    if (opts.check_a || opts.check_b) && !interval {
        return Err(Error::ParameterDomain(
            "entry bounds and decay checks apply to the interval family only".into(),
        ));
    }
    if opts.check_a && cfg.params.k < 1 {
        return Err(Error::ParameterDomain(
            "full-matrix bounds need k >= 1".into(),
        ));
    }
    if opts.check_b && cfg.params.k < 2 {
        return Err(Error::ParameterDomain(
            "reduced-matrix bounds need k >= 2 (they require q - 2r > 0)".into(),
        ));
    }

    let mut report = StructureReport {
        family: cfg.params.family,
        m,
        a_checked: false,
        a_entry_min: f64::NAN,
        a_entry_max: f64::NAN,
        a_lower_bound: f64::NAN,
        a_upper_bound: f64::NAN,
        b_checked: false,
        b_entry_min: f64::NAN,
        b_entry_max: f64::NAN,
        b_lower_bound: f64::NAN,
        b_upper_bound: f64::NAN,
        block_identity_dev: None,
    };

    let q = cfg.params.q;
    let r = cfg.radius;
    // Slack for the bound comparisons: the bounds are strict inequalities in
    // exact arithmetic, checked on rounded entries.
    const SLACK: f64 = 1e-12;

    if opts.check_a {
        let a = assemble_dense_a(cfg)?;
        let lo = (1.0 / (1.0 - 2.0 * r)).ln();
        let hi = (1.0 / r).ln();
        let (mut amin, mut amax) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..m {
            for j in 0..m {
                let v = a[(i, j)];
                amin = amin.min(v);
                amax = amax.max(v);
                if v < lo - SLACK || v > hi + SLACK {
                    return Err(Error::StructureViolation(format!(
                        "full matrix entry ({i},{j}) = {v} outside [{lo}, {hi}]"
                    )));
                }
            }
        }
        check_decay(&a, "full")?;
        report.a_checked = true;
        report.a_entry_min = amin;
        report.a_entry_max = amax;
        report.a_lower_bound = lo;
        report.a_upper_bound = hi;
    }

    if opts.check_b || opts.check_block_identity {
        let red = crate::geometry::reduce_by_symmetry(cfg.clone())?;
        let b = assemble_dense_b(&red)?;

        if opts.check_b {
            let lo = (1.0 / ((1.0 - q) * (q - 2.0 * r))).ln();
            let hi = (1.0 / (r * (1.0 - 2.0 * q + 2.0 * r))).ln();
            let n = red.len();
            let (mut bmin, mut bmax) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..n {
                for j in 0..n {
                    let v = b[(i, j)];
                    bmin = bmin.min(v);
                    bmax = bmax.max(v);
                    if v < lo - SLACK || v > hi + SLACK {
                        return Err(Error::StructureViolation(format!(
                            "reduced matrix entry ({i},{j}) = {v} outside [{lo}, {hi}]"
                        )));
                    }
                }
            }
            check_decay(&b, "reduced")?;
            report.b_checked = true;
            report.b_entry_min = bmin;
            report.b_entry_max = bmax;
            report.b_lower_bound = lo;
            report.b_upper_bound = hi;
        }

        if opts.check_block_identity {
            let dev = block_identity_deviation(cfg, &b)?;
            // The identity holds to rounding of the squared coordinates: the
            // entry error of -log|z_i - z_j| scales like eps / gap for the
            // closest reduced pair.
            let min_gap = min_pairwise_gap(&red.zpoints);
            let tol = (1e-13f64).max(16.0 * f64::EPSILON * 0.5 / min_gap);
            if dev > tol {
                return Err(Error::StructureViolation(format!(
                    "block identity deviation {dev:.3e} exceeds {tol:.3e}"
                )));
            }
            report.block_identity_dev = Some(dev);
        }
    }

    Ok(report)
}

fn min_pairwise_gap(z: &[Complex64]) -> f64 {
    let n = z.len();
    let mut gap = f64::INFINITY;
    if n * n <= 4_200_000 {
        for i in 0..n {
            for j in i + 1..n {
                gap = gap.min((z[i] - z[j]).norm());
            }
        }
    } else {
        for w in z.windows(2) {
            gap = gap.min((w[0] - w[1]).norm());
        }
    }
    gap
}

/// Max entrywise deviation between the dense reduced matrix and
/// `A11 + A12 J` formed by explicit block slicing and column reversal.
pub fn block_identity_deviation(cfg: &ChargeConfiguration, b: &DMatrix<f64>) -> Result<f64> {
    let a = assemble_dense_a(cfg)?;
    let half = cfg.count() / 2;
    let mut dev = 0.0f64;
    for i in 0..half {
        for j in 0..half {
            let lhs = b[(i, j)];
            let rhs = a[(i, j)] + a[(i, half + (half - 1 - j))];
            dev = dev.max((lhs - rhs).abs());
        }
    }
    Ok(dev)
}

fn check_decay(mat: &DMatrix<f64>, label: &str) -> Result<()> {
    let n = mat.nrows();
    for i in 0..n {
        for j in 1..n {
            let (prev, cur) = (mat[(i, j - 1)], mat[(i, j)]);
            let ok = if j <= i { prev < cur } else { prev > cur };
            if !ok {
                return Err(Error::StructureViolation(format!(
                    "{label} matrix row {i} fails monotone decay between columns {} and {j}",
                    j - 1
                )));
            }
        }
    }
    // Columns follow by symmetry, but the assembly is checked directly.
    for j in 0..n {
        for i in 1..n {
            let (prev, cur) = (mat[(i - 1, j)], mat[(i, j)]);
            let ok = if i <= j { prev < cur } else { prev > cur };
            if !ok {
                return Err(Error::StructureViolation(format!(
                    "{label} matrix column {j} fails monotone decay between rows {} and {i}",
                    i - 1
                )));
            }
        }
    }
    Ok(())
}
