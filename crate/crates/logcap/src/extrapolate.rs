//! Extrapolation of level capacities to the fractal limit.
//!
//! Successive differences of the level capacities decay geometrically, so a
//! least-squares line through `(k, log |d_k|)` determines the decay rate and
//! the remaining tail is summed in closed form until it falls below 1e-16.

use crate::error::{Error, Result};

/// Tail terms below this threshold are not summed.
pub const TAIL_CUTOFF: f64 = 1e-16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Differences `cap_k - cap_{k+1}` are positive (interval family).
    Decreasing,
    /// Differences are negative (dust at unit radius factor).
    Increasing,
}

/// Least-squares fit of `log |d_k| ~ p1 k + p2` over consecutive level
/// differences.
#[derive(Clone, Copy, Debug)]
pub struct ExtrapolationFit {
    /// Inclusive difference-index range used by the fit.
    pub k_fit_first: u32,
    pub k_fit_last: u32,
    pub p1: f64,
    pub p2: f64,
    pub direction: Direction,
    /// Smallest level with `exp(p1 k + p2) < 1e-16`.
    pub cutoff_k: u32,
    /// Largest absolute fit residual in log space.
    pub max_log_residual: f64,
}

/// Fit plus the extrapolated limit.
#[derive(Clone, Copy, Debug)]
pub struct Extrapolation {
    pub fit: ExtrapolationFit,
    pub limit: f64,
}

/// Fits the log-differences of consecutive `(k, cap_k)` values.
///
/// `direction`, when given, must agree with the sign of the observed
/// differences. `fit_range` restricts the fit to difference indices within
/// the inclusive range; the default uses all of them.
pub fn fit_log_differences(
    values: &[(u32, f64)],
    direction: Option<Direction>,
    fit_range: Option<(u32, u32)>,
) -> Result<ExtrapolationFit> {
    if values.len() < 3 {
        return Err(Error::TooFewValues {
            need: 3,
            got: values.len(),
        });
    }
    for w in values.windows(2) {
        if w[1].0 != w[0].0 + 1 {
            return Err(Error::NonConsecutiveLevels {
                prev: w[0].0,
                next: w[1].0,
            });
        }
    }

    let diffs: Vec<(u32, f64)> = values
        .windows(2)
        .map(|w| (w[0].0, w[0].1 - w[1].1))
        .collect();
    for (i, &(k, d)) in diffs.iter().enumerate() {
        if d == 0.0 {
            return Err(Error::ZeroDifference { k });
        }
        if d.signum() != diffs[0].1.signum() {
            return Err(Error::MixedSignDifferences { i: 0, j: i });
        }
    }
    let detected = if diffs[0].1 > 0.0 {
        Direction::Decreasing
    } else {
        Direction::Increasing
    };
    if let Some(dir) = direction {
        if dir != detected {
            return Err(Error::ParameterDomain(format!(
                "direction override {dir:?} contradicts the observed {detected:?} differences"
            )));
        }
    }

    let (lo, hi) = fit_range.unwrap_or((diffs[0].0, diffs[diffs.len() - 1].0));
    let fit_pts: Vec<(f64, f64)> = diffs
        .iter()
        .filter(|&&(k, _)| k >= lo && k <= hi)
        .map(|&(k, d)| (k as f64, d.abs().ln()))
        .collect();
    if fit_pts.len() < 2 {
        return Err(Error::TooFewValues {
            need: 2,
            got: fit_pts.len(),
        });
    }

    let n = fit_pts.len() as f64;
    let kbar = fit_pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ybar = fit_pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = fit_pts.iter().map(|p| (p.0 - kbar) * (p.0 - kbar)).sum();
    let sxy: f64 = fit_pts.iter().map(|p| (p.0 - kbar) * (p.1 - ybar)).sum();
    let p1 = sxy / sxx;
    let p2 = ybar - p1 * kbar;
    if p1 >= 0.0 || p1.is_nan() {
        return Err(Error::NotDecaying { p1 });
    }
    let max_log_residual = fit_pts
        .iter()
        .map(|&(k, y)| (y - (p1 * k + p2)).abs())
        .fold(0.0, f64::max);

    // First level whose fitted difference falls below the tail cutoff.
    let mut cutoff_k = values[values.len() - 1].0;
    while (p1 * cutoff_k as f64 + p2).exp() >= TAIL_CUTOFF {
        cutoff_k += 1;
        if cutoff_k > 1_000_000 {
            return Err(Error::NotDecaying { p1 });
        }
    }

    Ok(ExtrapolationFit {
        k_fit_first: lo.max(diffs[0].0),
        k_fit_last: hi.min(diffs[diffs.len() - 1].0),
        p1,
        p2,
        direction: detected,
        cutoff_k,
        max_log_residual,
    })
}

/// Sums the fitted geometric tail from the last computed level: the limit is
/// `cap_last -/+ sum_{j >= k_last} exp(p1 j + p2)`, minus for decreasing
/// sequences and plus for increasing ones.
pub fn extrapolate_limit(fit: &ExtrapolationFit, last: (u32, f64)) -> Result<f64> {
    if fit.p1 >= 0.0 || fit.p1.is_nan() {
        return Err(Error::NotDecaying { p1: fit.p1 });
    }
    let mut tail = 0.0;
    let mut j = last.0;
    while j < fit.cutoff_k {
        tail += (fit.p1 * j as f64 + fit.p2).exp();
        j += 1;
    }
    Ok(match fit.direction {
        Direction::Decreasing => last.1 - tail,
        Direction::Increasing => last.1 + tail,
    })
}

/// Convenience wrapper: fit on the given range and extrapolate from the last
/// value.
pub fn extrapolate_values(
    values: &[(u32, f64)],
    fit_range: Option<(u32, u32)>,
) -> Result<Extrapolation> {
    let fit = fit_log_differences(values, None, fit_range)?;
    let limit = extrapolate_limit(&fit, values[values.len() - 1])?;
    Ok(Extrapolation { fit, limit })
}

/// Published middle-third level capacities (15 significant digits), used by
/// tests and the validation command as a frozen reference sequence.
pub const MIDDLE_THIRD_REFERENCE: [(u32, f64); 16] = [
    (5, 0.227457816902705),
    (6, 0.224254487425132),
    (7, 0.222633059381908),
    (8, 0.221808427761487),
    (9, 0.221387991441743),
    (10, 0.221173357505459),
    (11, 0.221063713734092),
    (12, 0.221007684178946),
    (13, 0.220979047273590),
    (14, 0.220964409542387),
    (15, 0.220956927135913),
    (16, 0.220953102245645),
    (17, 0.220951146997627),
    (18, 0.220950147487058),
    (19, 0.220949636541913),
    (20, 0.220949375348718),
];

/// Published middle-third dust level capacities (unit radius factor).
pub const MIDDLE_THIRD_DUST_REFERENCE: [(u32, f64); 10] = [
    (1, 0.560597610169143),
    (2, 0.569592176189256),
    (3, 0.572519249447232),
    (4, 0.573655973612409),
    (5, 0.574085928829936),
    (6, 0.574247683774223),
    (7, 0.574308476438467),
    (8, 0.574331319690862),
    (9, 0.574339902832891),
    (10, 0.574343127837383),
];
