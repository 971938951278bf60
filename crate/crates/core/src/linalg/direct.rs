use faer::col::Col;
use faer::prelude::Solve;
use faer::sparse::{SparseRowMatRef, SymbolicSparseRowMatRef};
use log::debug;

use super::{relative_residual, Solution};
use crate::error::{CphmError, Result};
use crate::operators::SparseOperator;

const REFINEMENT_STEPS: usize = 3;

pub(super) fn solve(a: &SparseOperator, b: &[f64], rel_tol: f64) -> Result<Solution> {
    let n = a.nrows();
    let failure = |reason: String, residual: f64| CphmError::Solver {
        reason,
        n,
        nnz: a.nnz(),
        residual,
    };
    let symbolic = SymbolicSparseRowMatRef::new_checked(n, n, a.row_ptr(), None, a.col_idx());
    let mat = SparseRowMatRef::new(symbolic, a.values());
    let lu = mat
        .sp_lu()
        .map_err(|e| failure(format!("LU factorization failed: {e:?}"), f64::NAN))?;

    let x = lu.solve(Col::from_fn(n, |i| b[i]));
    let mut xs: Vec<f64> = (0..n).map(|i| x[i]).collect();
    let mut res = relative_residual(a, &xs, b);
    let mut steps = 0;
    while steps < REFINEMENT_STEPS && res.is_finite() && res > 0.1 * rel_tol {
        let ax = a.apply(&xs);
        let r = Col::from_fn(n, |i| b[i] - ax[i]);
        let dx = lu.solve(r);
        let trial: Vec<f64> = (0..n).map(|i| xs[i] + dx[i]).collect();
        let trial_res = relative_residual(a, &trial, b);
        steps += 1;
        if !(trial_res < res) {
            break;
        }
        xs = trial;
        res = trial_res;
    }
    if !res.is_finite() {
        return Err(failure("LU solve produced non-finite values".into(), res));
    }
    debug!("direct solve: n = {n}, nnz = {}, residual {res:.3e} after {steps} refinement steps", a.nnz());
    Ok(Solution {
        x: xs,
        rel_residual: res,
        iterations: steps,
    })
}
