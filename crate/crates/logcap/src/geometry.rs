//! Charge configurations for generalized Cantor sets and Cantor dust, and the
//! centrosymmetric reduction to the half-size point set.
//!
//! Level `k` of the interval family consists of `2^k` disks of radius
//! `q^k / 2` centered at the interval midpoints of the k-th Cantor iterate;
//! the dust family consists of `4^k` disks of radius `q^k / sqrt(2)` centered
//! at the square midpoints. Points are generated from the closed-form digit
//! expansion of the defining recursion so that coordinates are reproducible
//! bit-for-bit regardless of level.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Absolute tolerance for the centrosymmetry identity `w_{m+1-j} + w_j = 2 c`.
/// Closed-form generation makes the identity exact to a few ulps.
pub const SYMMETRY_TOL: f64 = 1e-13;

/// The two parametric families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// Generalized Cantor set on `[0, 1]`: `2^k` disks per level.
    IntervalSet,
    /// Cantor dust on the unit square: `4^k` disks per level.
    Dust,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::IntervalSet => "cantor",
            Family::Dust => "dust",
        }
    }
}

/// Parameters selecting one level of one family.
#[derive(Clone, Copy, Debug)]
pub struct CantorParameters {
    /// Contraction ratio, `0 < q < 1/2`.
    pub q: f64,
    /// Level (number of subdivision steps).
    pub k: u32,
    pub family: Family,
    /// Disk radius scaling for the dust family, in `[1, sqrt(2))`.
    /// The value 1 gives circumscribed circles of the squares.
    pub radius_factor: f64,
}

impl CantorParameters {
    pub fn interval(q: f64, k: u32) -> Result<Self> {
        if !(q > 0.0 && q < 0.5) || !q.is_finite() {
            return Err(Error::ParameterDomain(format!(
                "interval family needs 0 < q < 1/2, got q = {q}"
            )));
        }
        Ok(Self {
            q,
            k,
            family: Family::IntervalSet,
            radius_factor: 1.0,
        })
    }

    pub fn dust(q: f64, k: u32) -> Result<Self> {
        Self::dust_with_radius_factor(q, k, 1.0)
    }

    pub fn dust_with_radius_factor(q: f64, k: u32, radius_factor: f64) -> Result<Self> {
        if !(q > 0.0 && q < 0.5) || !q.is_finite() {
            return Err(Error::ParameterDomain(format!(
                "dust family needs 0 < q < 1/2, got q = {q}"
            )));
        }
        if !(1.0..std::f64::consts::SQRT_2).contains(&radius_factor) {
            return Err(Error::ParameterDomain(format!(
                "radius factor must lie in [1, sqrt(2)), got {radius_factor}"
            )));
        }
        Ok(Self {
            q,
            k,
            family: Family::Dust,
            radius_factor,
        })
    }

    /// Number of disks at this level.
    pub fn count(&self) -> usize {
        match self.family {
            Family::IntervalSet => 1usize << self.k,
            Family::Dust => 1usize << (2 * self.k),
        }
    }
}

/// One charge point per component: the centers `w_j`, the common radius, and
/// the symmetry center of the configuration.
#[derive(Clone, Debug)]
pub struct ChargeConfiguration {
    pub params: CantorParameters,
    /// Centers in the canonical ordering: increasing along `[0,1]` for the
    /// interval family, recursive quadrant order for dust.
    pub points: Vec<Complex64>,
    pub radius: f64,
    /// Center of the point symmetry `w -> 2 center - w`.
    pub center: Complex64,
}

impl ChargeConfiguration {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    /// The reference configuration of two disks with centers 1/6 and 5/6 and
    /// a free radius `0 < r <= 1/6`, for comparison against the exact
    /// two-disk capacity.
    pub fn two_disks(r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0 / 6.0) {
            return Err(Error::ParameterDomain(format!(
                "two-disk radius must satisfy 0 < r <= 1/6, got {r}"
            )));
        }
        Ok(Self {
            params: CantorParameters {
                q: 1.0 / 3.0,
                k: 1,
                family: Family::IntervalSet,
                radius_factor: 1.0,
            },
            points: vec![
                Complex64::new(1.0 / 6.0, 0.0),
                Complex64::new(5.0 / 6.0, 0.0),
            ],
            radius: r,
            center: Complex64::new(0.5, 0.0),
        })
    }
}

/// Builds the configuration for either family.
pub fn charge_configuration(params: &CantorParameters) -> Result<ChargeConfiguration> {
    match params.family {
        Family::IntervalSet => cantor_interval_points(params),
        Family::Dust => cantor_dust_points(params),
    }
}

/// Midpoints of the `2^k` intervals of the k-th Cantor iterate, in increasing
/// order, with radius `q^k / 2`.
///
/// Index `j` with binary digits `b_1 .. b_k` (most significant first) maps to
/// `w = sum_i b_i (1-q) q^(i-1) + q^k / 2`; digits are accumulated from the
/// smallest scale upward.
pub fn cantor_interval_points(params: &CantorParameters) -> Result<ChargeConfiguration> {
    if params.family != Family::IntervalSet {
        return Err(Error::ParameterDomain(
            "cantor_interval_points requires the interval family".into(),
        ));
    }
    let _ = CantorParameters::interval(params.q, params.k)?;
    let q = params.q;
    let k = params.k as usize;
    if k >= usize::BITS as usize - 1 {
        return Err(Error::ParameterDomain(format!("level k = {k} too large")));
    }
    let m = 1usize << k;
    let mut pw = vec![1.0f64; k + 1];
    for i in 1..=k {
        pw[i] = pw[i - 1] * q;
    }
    let r = 0.5 * pw[k];
    let mut points = Vec::with_capacity(m);
    for idx in 0..m {
        let mut x = r;
        for i in (1..=k).rev() {
            if (idx >> (k - i)) & 1 == 1 {
                x += (1.0 - q) * pw[i - 1];
            }
        }
        points.push(Complex64::new(x, 0.0));
    }
    let cfg = ChargeConfiguration {
        params: *params,
        points,
        radius: r,
        center: Complex64::new(0.5, 0.0),
    };
    check_interval_invariants(&cfg)?;
    Ok(cfg)
}

fn check_interval_invariants(cfg: &ChargeConfiguration) -> Result<()> {
    let m = cfg.count();
    let two_r = 2.0 * cfg.radius;
    for j in 1..m {
        let gap = cfg.points[j].re - cfg.points[j - 1].re;
        if gap <= two_r {
            return Err(Error::DiskOverlap {
                i: j - 1,
                j,
                dist: gap,
                two_r,
            });
        }
    }
    check_centrosymmetry(&cfg.points, cfg.center)
}

/// Centers of the `4^k` squares of the k-th dust iterate, in the recursive
/// quadrant order, with radius `radius_factor * q^k / sqrt(2)`.
///
/// Index `j` with base-4 digits `d_1 .. d_k` (most significant first) maps to
/// `w = sum_i t(d_i) q^(i-1) + q^k (1+i)/2` where `t` runs over the quadrant
/// offsets `{0, 1-q, (1-q)i, (1-q)(1+i)}`.
pub fn cantor_dust_points(params: &CantorParameters) -> Result<ChargeConfiguration> {
    if params.family != Family::Dust {
        return Err(Error::ParameterDomain(
            "cantor_dust_points requires the dust family".into(),
        ));
    }
    let _ = CantorParameters::dust_with_radius_factor(params.q, params.k, params.radius_factor)?;
    let q = params.q;
    let k = params.k as usize;
    if 2 * k >= usize::BITS as usize - 1 {
        return Err(Error::ParameterDomain(format!("level k = {k} too large")));
    }
    let m = 1usize << (2 * k);
    let mut pw = vec![1.0f64; k + 1];
    for i in 1..=k {
        pw[i] = pw[i - 1] * q;
    }
    let r = params.radius_factor * pw[k] / std::f64::consts::SQRT_2;
    let offsets = [
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0 - q, 0.0),
        Complex64::new(0.0, 1.0 - q),
        Complex64::new(1.0 - q, 1.0 - q),
    ];
    let seed = Complex64::new(0.5 * pw[k], 0.5 * pw[k]);
    let mut points = Vec::with_capacity(m);
    for idx in 0..m {
        let mut w = seed;
        for i in (1..=k).rev() {
            let d = (idx >> (2 * (k - i))) & 3;
            if d != 0 {
                w += offsets[d] * pw[i - 1];
            }
        }
        points.push(w);
    }
    let cfg = ChargeConfiguration {
        params: *params,
        points,
        radius: r,
        center: Complex64::new(0.5, 0.5),
    };
    check_dust_invariants(&cfg)?;
    Ok(cfg)
}

fn check_dust_invariants(cfg: &ChargeConfiguration) -> Result<()> {
    let m = cfg.count();
    let q = cfg.params.q;
    let k = cfg.params.k;
    let two_r = 2.0 * cfg.radius;
    if k >= 1 {
        // The global nearest pair is an adjacent same-row pair at the finest
        // scale; indices 0 and 1 realize it.
        let min_gap = (1.0 - q) * q.powi(k as i32 - 1);
        if min_gap <= two_r {
            return Err(Error::DiskOverlap {
                i: 0,
                j: 1,
                dist: min_gap,
                two_r,
            });
        }
        if m <= 2048 {
            for i in 0..m {
                for j in i + 1..m {
                    let dist = (cfg.points[i] - cfg.points[j]).norm();
                    if dist <= two_r {
                        return Err(Error::DiskOverlap { i, j, dist, two_r });
                    }
                }
            }
        }
        // Recursive-order identities for the half lists.
        let half = m / 2;
        let shift = Complex64::new(0.0, 1.0 - q);
        let anti = Complex64::new(1.0, q);
        for j in 0..half {
            let res1 = (cfg.points[half + j] - shift - cfg.points[j]).norm();
            let res2 = (cfg.points[half - 1 - j] + cfg.points[j] - anti).norm();
            if res1 > SYMMETRY_TOL || res2 > SYMMETRY_TOL {
                return Err(Error::SymmetryViolation {
                    index: j,
                    residual: res1.max(res2),
                    tol: SYMMETRY_TOL,
                });
            }
        }
    }
    check_centrosymmetry(&cfg.points, cfg.center)
}

fn check_centrosymmetry(points: &[Complex64], center: Complex64) -> Result<()> {
    let m = points.len();
    let twice = 2.0 * center;
    for j in 0..m / 2 {
        let residual = (points[m - 1 - j] + points[j] - twice).norm();
        if residual > SYMMETRY_TOL {
            return Err(Error::SymmetryViolation {
                index: j,
                residual,
                tol: SYMMETRY_TOL,
            });
        }
    }
    Ok(())
}

/// Half-size point set defining the symmetry-reduced matrix: `z_i` is the
/// squared centered coordinate of the i-th point and `diag` holds the
/// diagonal entries `-log|2 r sqrt(z_i)|`.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub zpoints: Vec<Complex64>,
    pub radius: f64,
    pub diag: Vec<f64>,
    pub source: ChargeConfiguration,
}

impl ReducedSystem {
    pub fn len(&self) -> usize {
        self.zpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zpoints.is_empty()
    }
}

/// Performs the centrosymmetric reduction: `z_i = (w_i - center)^2` for the
/// first half of the points, with diagonal `-log(2 r |w_i - center|)`.
///
/// The orthogonal transform behind the reduction is never materialized; only
/// these closed-form quantities are needed.
pub fn reduce_by_symmetry(cfg: ChargeConfiguration) -> Result<ReducedSystem> {
    let m = cfg.count();
    if m < 2 || !m.is_multiple_of(2) {
        return Err(Error::ParameterDomain(format!(
            "symmetry reduction needs an even number of points, got {m}"
        )));
    }
    check_centrosymmetry(&cfg.points, cfg.center)?;
    let half = m / 2;
    let mut zpoints = Vec::with_capacity(half);
    let mut diag = Vec::with_capacity(half);
    for j in 0..half {
        let s = cfg.points[j] - cfg.center;
        zpoints.push(s * s);
        diag.push(-(2.0 * cfg.radius * s.norm()).ln());
    }
    if cfg.params.family == Family::IntervalSet {
        for i in 1..half {
            if zpoints[i].re >= zpoints[i - 1].re {
                return Err(Error::StructureViolation(format!(
                    "reduced interval points must decrease strictly: z[{}] >= z[{}]",
                    i,
                    i - 1
                )));
            }
        }
        if half >= 1 && zpoints[0].re >= 0.25 {
            return Err(Error::StructureViolation(
                "reduced interval points must lie below 1/4".into(),
            ));
        }
    }
    Ok(ReducedSystem {
        zpoints,
        radius: cfg.radius,
        diag,
        source: cfg,
    })
}
