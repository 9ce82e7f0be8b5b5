//! Block-diagonal preconditioner assembled from the leading principal block
//! of the full collocation matrix.
//!
//! The leading `d x d` block (d = 2^j for the interval family, 4^j for dust)
//! contains the largest entries of the matrix, so copies of it along the
//! diagonal approximate the full matrix well. The block is LU-factorized
//! once (with partial pivoting, rather than inverted explicitly) and applied
//! by blockwise solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{ChargeConfiguration, Family};
use crate::operator::entry_a;

/// Largest supported block order.
pub const BLOCK_CAP: usize = 4096;

/// Default block exponent per family: `j = 4` for the interval family,
/// `j = 2` for dust.
pub fn default_block_exponent(family: Family) -> usize {
    match family {
        Family::IntervalSet => 4,
        Family::Dust => 2,
    }
}

pub struct BlockPreconditioner {
    block_exponent: usize,
    block_size: usize,
    copies: usize,
    block: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl std::fmt::Debug for BlockPreconditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlockPreconditioner")
            .field("block_exponent", &self.block_exponent)
            .field("block_size", &self.block_size)
            .field("copies", &self.copies)
            .finish()
    }
}

/// Builds the preconditioner for the reduced system of `cfg`: the leading
/// principal block of the full matrix, factorized. Requires
/// `1 <= j <= k - 1`, which also makes the block size divide the reduced
/// dimension.
pub fn build_preconditioner(cfg: &ChargeConfiguration, j: usize) -> Result<BlockPreconditioner> {
    let k = cfg.params.k as usize;
    if j < 1 || j + 1 > k {
        return Err(Error::BlockExponentRange {
            j,
            k: cfg.params.k as usize,
        });
    }
    let d = match cfg.params.family {
        Family::IntervalSet => 1usize << j,
        Family::Dust => 1usize << (2 * j),
    };
    if d > BLOCK_CAP {
        return Err(Error::ParameterDomain(format!(
            "preconditioner block size {d} exceeds cap {BLOCK_CAP}"
        )));
    }
    let m = cfg.count();
    debug_assert_eq!(m / 2 % d, 0);
    let copies = m / (2 * d);

    let mut block = DMatrix::zeros(d, d);
    for i in 0..d {
        for l in 0..d {
            block[(i, l)] = entry_a(cfg, i, l);
        }
    }
    let lu = block.clone().lu();

    let pre = BlockPreconditioner {
        block_exponent: j,
        block_size: d,
        copies,
        block,
        lu,
    };

    // Round-trip self test on a fixed probe vector.
    let probe: Vec<f64> = (0..d)
        .map(|i| ((i + 1) as f64 * 0.37).sin() + 1.5)
        .collect();
    let x = pre.apply_inverse(&probe)?;
    let back = pre.apply(&x)?;
    let dev = probe
        .iter()
        .zip(&back)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if dev > 1e-10 {
        return Err(Error::SingularBlock);
    }
    Ok(pre)
}

impl BlockPreconditioner {
    pub fn block_exponent(&self) -> usize {
        self.block_exponent
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    /// Blockwise solve `D x_b = v_b` for each contiguous block.
    pub fn apply_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        let d = self.block_size;
        if v.is_empty() || !v.len().is_multiple_of(d) {
            return Err(Error::BlockSizeMismatch { d, len: v.len() });
        }
        let mut out = Vec::with_capacity(v.len());
        for chunk in v.chunks_exact(d) {
            let rhs = DVector::from_column_slice(chunk);
            let x = self.lu.solve(&rhs).ok_or(Error::SingularBlock)?;
            out.extend_from_slice(x.as_slice());
        }
        Ok(out)
    }

    /// Blockwise multiply by the preconditioner itself (used by round-trip
    /// checks).
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let d = self.block_size;
        if v.is_empty() || !v.len().is_multiple_of(d) {
            return Err(Error::BlockSizeMismatch { d, len: v.len() });
        }
        let mut out = Vec::with_capacity(v.len());
        for chunk in v.chunks_exact(d) {
            let rhs = DVector::from_column_slice(chunk);
            let x = &self.block * rhs;
            out.extend_from_slice(x.as_slice());
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cantor_dust_points, cantor_interval_points, CantorParameters};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interval_cfg(q: f64, k: u32) -> ChargeConfiguration {
        cantor_interval_points(&CantorParameters::interval(q, k).unwrap()).unwrap()
    }

    #[test]
    fn block_sizes_and_copies() {
        let p = build_preconditioner(&interval_cfg(1.0 / 3.0, 5), 4).unwrap();
        assert_eq!(p.block_size(), 16);
        assert_eq!(p.copies(), 1);

        let p = build_preconditioner(&interval_cfg(1.0 / 3.0, 10), 4).unwrap();
        assert_eq!(p.block_size(), 16);
        assert_eq!(p.copies(), 32);

        let cfg = cantor_dust_points(&CantorParameters::dust(1.0 / 3.0, 4).unwrap()).unwrap();
        let p = build_preconditioner(&cfg, 2).unwrap();
        assert_eq!(p.block_size(), 16);
        assert_eq!(p.copies(), 8);
    }

    #[test]
    fn exponent_out_of_range() {
        let cfg = interval_cfg(1.0 / 3.0, 4);
        assert!(matches!(
            build_preconditioner(&cfg, 4),
            Err(Error::BlockExponentRange { .. })
        ));
        assert!(matches!(
            build_preconditioner(&cfg, 0),
            Err(Error::BlockExponentRange { .. })
        ));
        assert!(build_preconditioner(&cfg, 3).is_ok());
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (k, j) in [(6u32, 2usize), (8, 4), (10, 3)] {
            let cfg = interval_cfg(1.0 / 3.0, k);
            let p = build_preconditioner(&cfg, j).unwrap();
            let n = cfg.count() / 2;
            let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let pw = p.apply(&w).unwrap();
            let back = p.apply_inverse(&pw).unwrap();
            let dev = w
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(dev < 1e-10, "k={k} j={j}: {dev:.3e}");
        }
    }

    #[test]
    fn single_block_equals_one_dense_solve() {
        // j = k - 1 makes the preconditioner a single block covering the
        // whole reduced vector.
        let cfg = interval_cfg(1.0 / 3.0, 5);
        let p = build_preconditioner(&cfg, 4).unwrap();
        assert_eq!(p.copies(), 1);
        let v: Vec<f64> = (0..16).map(|i| (i as f64).cos()).collect();
        let x = p.apply_inverse(&v).unwrap();
        let back = p.apply(&x).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let cfg = interval_cfg(1.0 / 3.0, 6);
        let p = build_preconditioner(&cfg, 2).unwrap();
        assert!(matches!(
            p.apply_inverse(&vec![1.0; 30]),
            Err(Error::BlockSizeMismatch { .. })
        ));
    }
}
