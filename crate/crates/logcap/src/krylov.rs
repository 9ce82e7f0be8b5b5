//! Matrix-free GMRES and MINRES over an abstract operator, with optional
//! left preconditioning for GMRES.
//!
//! GMRES uses the full recurrence (no restarts), modified Gram-Schmidt with
//! one conditional reorthogonalization pass, and progressive plane rotations
//! on the Hessenberg matrix. The convergence metric is the relative
//! preconditioned residual; the unpreconditioned true residual is computed
//! once at termination. Reaching the iteration cap is not an error: the
//! result is returned with `converged = false`.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::precond::BlockPreconditioner;

pub trait LinearOp {
    fn dim(&self) -> usize;
    /// `out = A x`.
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

/// Identity operator, mostly for tests.
pub struct IdentityOp(pub usize);

impl LinearOp for IdentityOp {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
}

/// Dense operator over a nalgebra matrix, for oracle comparisons.
pub struct DenseOp(pub nalgebra::DMatrix<f64>);

impl LinearOp for DenseOp {
    fn dim(&self) -> usize {
        self.0.nrows()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let v = &self.0 * nalgebra::DVector::from_column_slice(x);
        out.copy_from_slice(v.as_slice());
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KrylovMethod {
    Gmres,
    Minres,
}

pub struct SolverConfig {
    /// Relative residual tolerance.
    pub tol: f64,
    /// Iteration cap.
    pub maxit: usize,
    pub method: KrylovMethod,
    /// Optional left preconditioner (GMRES only).
    pub preconditioner: Option<BlockPreconditioner>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            maxit: 400,
            method: KrylovMethod::Gmres,
            preconditioner: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KrylovResult {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Relative preconditioned residual, one entry per iteration, preceded
    /// by the initial value 1 (the start vector is zero).
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub wall_time: Duration,
    /// Unpreconditioned `||b - A x|| / ||b||` of the returned solution.
    pub true_relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else if a.abs() > b.abs() {
        let t = b / a;
        let c = 1.0 / (1.0 + t * t).sqrt();
        (c, c * t)
    } else {
        let t = a / b;
        let s = 1.0 / (1.0 + t * t).sqrt();
        (s * t, s)
    }
}

fn validate(op: &dyn LinearOp, rhs: &[f64], cfg: &SolverConfig) -> Result<()> {
    if rhs.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: rhs.len(),
        });
    }
    if cfg.tol <= 0.0 || cfg.tol.is_nan() || cfg.maxit == 0 {
        return Err(Error::ParameterDomain(
            "solver needs tol > 0 and maxit >= 1".into(),
        ));
    }
    if rhs.iter().all(|&v| v == 0.0) {
        return Err(Error::ParameterDomain("right-hand side is zero".into()));
    }
    Ok(())
}

/// Dispatches on `cfg.method`.
pub fn solve(op: &dyn LinearOp, rhs: &[f64], cfg: &SolverConfig) -> Result<KrylovResult> {
    match cfg.method {
        KrylovMethod::Gmres => gmres(op, rhs, cfg),
        KrylovMethod::Minres => minres(op, rhs, cfg),
    }
}

/// Full-recurrence GMRES started from the zero vector.
pub fn gmres(op: &dyn LinearOp, rhs: &[f64], cfg: &SolverConfig) -> Result<KrylovResult> {
    validate(op, rhs, cfg)?;
    let start = Instant::now();
    let n = op.dim();
    let precond = cfg.preconditioner.as_ref();
    let apply_prec = |v: Vec<f64>| -> Result<Vec<f64>> {
        match precond {
            Some(p) => p.apply_inverse(&v),
            None => Ok(v),
        }
    };

    let bt = apply_prec(rhs.to_vec())?;
    let bnorm = norm2(&bt);
    if bnorm <= 0.0 || !bnorm.is_finite() {
        return Err(Error::ParameterDomain(
            "preconditioned right-hand side is zero or not finite".into(),
        ));
    }

    // Start vector zero: the initial residual is the preconditioned rhs.
    let mut history = vec![1.0];
    let mut converged = 1.0 <= cfg.tol;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut hcols: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![bnorm];
    let mut iterations = 0;

    if !converged {
        let mut v0 = bt;
        let inv = 1.0 / bnorm;
        v0.iter_mut().for_each(|x| *x *= inv);
        basis.push(v0);
        let mut aw = vec![0.0; n];

        for k in 0..cfg.maxit {
            op.apply(&basis[k], &mut aw);
            let mut w = apply_prec(aw.clone())?;
            let w_before = norm2(&w);

            let mut hcol = vec![0.0; k + 2];
            for (i, vi) in basis.iter().enumerate() {
                let hik = dot(&w, vi);
                axpy(&mut w, -hik, vi);
                hcol[i] = hik;
            }
            let mut wnorm = norm2(&w);
            if wnorm < 1e-8 * w_before {
                // Severe cancellation: one reorthogonalization pass.
                for (i, vi) in basis.iter().enumerate() {
                    let c = dot(&w, vi);
                    axpy(&mut w, -c, vi);
                    hcol[i] += c;
                }
                wnorm = norm2(&w);
            }
            hcol[k + 1] = wnorm;
            let breakdown = wnorm == 0.0;
            if !breakdown {
                let inv = 1.0 / wnorm;
                let mut v = w;
                v.iter_mut().for_each(|x| *x *= inv);
                basis.push(v);
            }

            for i in 0..k {
                let t = cs[i] * hcol[i] + sn[i] * hcol[i + 1];
                hcol[i + 1] = -sn[i] * hcol[i] + cs[i] * hcol[i + 1];
                hcol[i] = t;
            }
            let (c, s) = givens(hcol[k], hcol[k + 1]);
            hcol[k] = c * hcol[k] + s * hcol[k + 1];
            hcol[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            g.push(-s * g[k]);
            g[k] *= c;
            hcols.push(hcol);

            iterations = k + 1;
            let rel = g[k + 1].abs() / bnorm;
            history.push(rel);
            if rel <= cfg.tol || breakdown {
                converged = true;
                break;
            }
        }
    }

    // Back substitution on the triangular system.
    let kd = iterations;
    let mut ycoef = vec![0.0; kd];
    for i in (0..kd).rev() {
        let mut s = g[i];
        for (j, yj) in ycoef.iter().enumerate().take(kd).skip(i + 1) {
            s -= hcols[j][i] * yj;
        }
        ycoef[i] = s / hcols[i][i];
    }
    let mut x = vec![0.0; n];
    for (j, yj) in ycoef.iter().enumerate() {
        axpy(&mut x, *yj, &basis[j]);
    }

    let mut ax = vec![0.0; n];
    if kd > 0 {
        op.apply(&x, &mut ax);
    }
    let true_rel = {
        let mut r = rhs.to_vec();
        axpy(&mut r, -1.0, &ax);
        norm2(&r) / norm2(rhs)
    };

    Ok(KrylovResult {
        solution: x,
        iterations,
        residual_history: history,
        converged,
        wall_time: start.elapsed(),
        true_relative_residual: true_rel,
    })
}

/// MINRES with the 3-term Lanczos recurrence, for symmetric operators.
/// Unpreconditioned only; kept for convergence comparisons against GMRES.
pub fn minres(op: &dyn LinearOp, rhs: &[f64], cfg: &SolverConfig) -> Result<KrylovResult> {
    validate(op, rhs, cfg)?;
    if cfg.preconditioner.is_some() {
        return Err(Error::ParameterDomain(
            "minres does not support the block preconditioner".into(),
        ));
    }
    let start = Instant::now();
    let n = op.dim();
    let bnorm = norm2(rhs);

    let mut v_prev = vec![0.0; n];
    let mut v: Vec<f64> = rhs.iter().map(|&b| b / bnorm).collect();
    let mut beta = bnorm;
    let mut phibar = bnorm;
    let (mut c_prev2, mut s_prev2) = (1.0f64, 0.0f64);
    let (mut c_prev, mut s_prev) = (1.0f64, 0.0f64);
    let mut d_prev = vec![0.0; n];
    let mut d_prev2 = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut history = vec![1.0];
    let mut converged = 1.0 <= cfg.tol;
    let mut iterations = 0;
    let mut w = vec![0.0; n];

    if !converged {
        for k in 0..cfg.maxit {
            op.apply(&v, &mut w);
            let alpha = dot(&v, &w);
            for i in 0..n {
                w[i] -= alpha * v[i] + beta * v_prev[i];
            }
            let beta_next = norm2(&w);

            // Apply the two previous rotations to the new tridiagonal column.
            let eps = s_prev2 * beta;
            let delta_mid = c_prev2 * beta;
            let delta = c_prev * delta_mid + s_prev * alpha;
            let abar = -s_prev * delta_mid + c_prev * alpha;
            let (c, s) = givens(abar, beta_next);
            let gamma = c * abar + s * beta_next;

            if gamma == 0.0 {
                // Exact breakdown: the residual is already zero.
                converged = true;
                iterations = k;
                break;
            }

            let phi = c * phibar;
            phibar *= -s;

            // Direction update and solution step.
            let inv_gamma = 1.0 / gamma;
            let mut d = vec![0.0; n];
            for i in 0..n {
                d[i] = (v[i] - delta * d_prev[i] - eps * d_prev2[i]) * inv_gamma;
            }
            axpy(&mut x, phi, &d);
            d_prev2 = std::mem::replace(&mut d_prev, d);

            c_prev2 = c_prev;
            s_prev2 = s_prev;
            c_prev = c;
            s_prev = s;

            if beta_next > 0.0 {
                let inv = 1.0 / beta_next;
                let next: Vec<f64> = w.iter().map(|&wi| wi * inv).collect();
                v_prev = std::mem::replace(&mut v, next);
            }
            beta = beta_next;

            iterations = k + 1;
            let rel = phibar.abs() / bnorm;
            history.push(rel);
            if rel <= cfg.tol || beta_next == 0.0 {
                converged = rel <= cfg.tol || beta_next == 0.0;
                break;
            }
        }
    }

    let mut ax = vec![0.0; n];
    op.apply(&x, &mut ax);
    let true_rel = {
        let mut r = rhs.to_vec();
        axpy(&mut r, -1.0, &ax);
        norm2(&r) / bnorm
    };

    Ok(KrylovResult {
        solution: x,
        iterations,
        residual_history: history,
        converged,
        wall_time: start.elapsed(),
        true_relative_residual: true_rel,
    })
}
