//! Brute-force reference solver for tiny QPs with a positive definite
//! Hessian: every subset of inequality rows is tried as the active set, the
//! equality-constrained KKT system is solved, and the best feasible candidate
//! wins. Exponential in the number of rows; meant for cross-checking only.

use nalgebra::{DMatrix, DVector};

use super::problem::QuadraticProgram;

/// Row subsets are enumerated as bit masks, so at most this many rows.
pub const MAX_ROWS: usize = 16;

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub primal: DVector<f64>,
    pub objective: f64,
}

/// Returns `None` when no active set yields a feasible point, which for a
/// positive definite Hessian means the problem is infeasible.
///
/// Only the upper bounds of the inequality rows are considered.
pub fn exhaustive_active_set(qp: &QuadraticProgram, tol: f64) -> Option<ReferenceSolution> {
    let n = qp.num_vars();
    let m = qp.num_ineq();
    let p = qp.num_eq();
    assert!(m <= MAX_ROWS, "reference solver limited to {MAX_ROWS} rows");
    let mut best: Option<ReferenceSolution> = None;
    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = p + active.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
        rhs.rows_mut(0, n).copy_from(&(-&qp.linear));
        for r in 0..p {
            for j in 0..n {
                kkt[(n + r, j)] = qp.eq_lhs[(r, j)];
                kkt[(j, n + r)] = qp.eq_lhs[(r, j)];
            }
            rhs[n + r] = qp.eq_rhs[r];
        }
        for (r, &i) in active.iter().enumerate() {
            for j in 0..n {
                kkt[(n + p + r, j)] = qp.ineq_lhs[(i, j)];
                kkt[(j, n + p + r)] = qp.ineq_lhs[(i, j)];
            }
            rhs[n + p + r] = qp.ineq_rhs[i];
        }
        let lu = kkt.lu();
        let Some(sol) = lu.solve(&rhs) else { continue };
        if !sol.iter().all(|v| v.is_finite()) {
            continue;
        }
        let z = sol.rows(0, n).into_owned();
        if qp.max_violation(&z) > tol {
            continue;
        }
        let obj = qp.objective_value(&z);
        if best.as_ref().is_none_or(|b| obj < b.objective) {
            best = Some(ReferenceSolution { primal: z, objective: obj });
        }
    }
    best
}
