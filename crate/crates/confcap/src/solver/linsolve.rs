//! Matrix-free Jacobi-preconditioned conjugate gradients with Dirichlet
//! masking.
//!
//! The two radial end shells carry Dirichlet data, so the solve runs on the
//! restricted system: search directions and residuals are zeroed on fixed
//! rows, which is equivalent to eliminating them without reindexing.

use super::operator::FrozenOperator;
use crate::error::{Error, Result};
use crate::par;

/// Symmetric positive linear operator in matrix-free form.
pub(crate) trait LinearOp {
    fn n_nodes(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

impl LinearOp for FrozenOperator<'_> {
    fn n_nodes(&self) -> usize {
        FrozenOperator::n_nodes(self)
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        FrozenOperator::apply(self, x, out)
    }

    fn diagonal(&self) -> Vec<f64> {
        FrozenOperator::diagonal(self)
    }
}

/// Solve `A x = rhs` on the free rows, starting from zero.  `rhs` must
/// already vanish on fixed rows.  Returns the solution (zero on fixed rows)
/// and the iteration count.
pub(crate) fn solve_masked(
    op: &impl LinearOp,
    free: &[bool],
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = op.n_nodes();
    debug_assert_eq!(free.len(), n);
    debug_assert_eq!(rhs.len(), n);

    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let rhs_norm = par::norm_sq(&r).sqrt();
    if rhs_norm == 0.0 {
        return Ok((x, 0));
    }
    let target = tol * rhs_norm;

    let diag = op.diagonal();
    if (0..n).any(|q| free[q] && diag[q] <= 0.0) {
        return Err(Error::IndefiniteSystem { iterations: 0 });
    }
    let inv_diag: Vec<f64> = (0..n)
        .map(|q| if free[q] { 1.0 / diag[q] } else { 0.0 })
        .collect();

    let mut z: Vec<f64> = (0..n).map(|q| inv_diag[q] * r[q]).collect();
    let mut p = z.clone();
    let mut rz = par::dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = rhs_norm;

    for it in 0..max_iter {
        op.apply(&p, &mut ap);
        for q in 0..n {
            if !free[q] {
                ap[q] = 0.0;
            }
        }
        let pap = par::dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::IndefiniteSystem { iterations: it });
        }
        let alpha = rz / pap;
        for q in 0..n {
            x[q] += alpha * p[q];
            r[q] -= alpha * ap[q];
        }
        res = par::norm_sq(&r).sqrt();
        if res <= target {
            return Ok((x, it + 1));
        }
        for q in 0..n {
            z[q] = inv_diag[q] * r[q];
        }
        let rz_next = par::dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for q in 0..n {
            p[q] = z[q] + beta * p[q];
        }
    }

    Err(Error::SolverDiverged {
        residual: res,
        target,
        iterations: max_iter,
    })
}
