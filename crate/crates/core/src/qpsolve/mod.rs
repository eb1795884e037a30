//! Dense convex QP/LP solving.
//!
//! Problems are stated as
//!
//! ```text
//! minimize    ½ zᵀ H z + fᵀ z
//! subject to  E z  = e
//!             l <= G z <= u
//! ```
//!
//! where a one-sided row simply has `l = -inf`. Equalities are eliminated up
//! front through an orthonormal null-space basis, so both back ends work on
//! an inequality-only problem:
//!
//! * Phase-1 feasibility, LPs and emptiness tests go through a primal
//!   active-set (simplex-type) method that returns exact vertex solutions
//!   and Farkas certificates.
//! * QPs start from the phase-1 point and run a primal active-set method
//!   with null-space steps. If that does not end in a verified optimum, an
//!   operator-splitting (ADMM) iteration with Ruiz equilibration and an
//!   active-set polish takes over.
//!
//! Signed multipliers are used for two-sided rows: `dual_ineq[i] > 0` means
//! the upper bound is active, `< 0` the lower bound.

mod active;
mod admm;
mod builder;
mod problem;
mod reduce;
pub mod reference;
mod simplex;

pub use builder::QpBuilder;
pub use problem::{
    FeasibilityResult, InfeasibilityCertificate, KktResiduals, LinearProgram, QpDump, QpSettings, QpSolution,
    QpStatus, QuadraticProgram,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use reduce::Reduced;

/// Phase-1 threshold on the optimal maximum constraint violation.
pub const FEASIBILITY_MARGIN: f64 = 1e-7;

/// Solves a convex QP. Never reports `Optimal` unless the KKT residuals pass
/// the configured tolerances.
pub fn solve_qp(problem: &QuadraticProgram, settings: &QpSettings) -> Result<QpSolution> {
    problem.validate()?;
    let reduced = Reduced::new(problem)?;
    if let Some(cert) = reduced.inconsistent_equalities() {
        return Ok(QpSolution::infeasible(problem, cert));
    }
    let rows = reduced.ineq_rows();
    let phase1 = simplex::phase_one(&rows, settings)?;
    if phase1.margin > FEASIBILITY_MARGIN {
        let cert = reduced.certificate_from_rows(problem, &phase1.multipliers);
        return Ok(QpSolution::infeasible(problem, cert));
    }
    let direct = active::solve(
        &reduced.hessian,
        &reduced.linear,
        &rows,
        &phase1.point,
        phase1.margin.max(0.0),
        settings,
    );
    let mut sol = reduced.recover(problem, &direct.point, &rows.signed_duals(&direct.multipliers), settings);
    sol.iterations = phase1.iterations + direct.iterations;
    if direct.status == QpStatus::Optimal && sol.kkt.passes(problem, &sol, settings) {
        return Ok(sol);
    }
    log::debug!("active-set QP ended {:?}, falling back to ADMM", direct.status);
    let inner = admm::solve(&reduced, settings)?;
    let mut sol = reduced.recover(problem, &inner.y, &inner.mu, settings);
    sol.iterations = inner.iterations;
    match inner.status {
        QpStatus::Optimal if sol.kkt.passes(problem, &sol, settings) => {}
        QpStatus::DualInfeasible => sol.status = QpStatus::DualInfeasible,
        _ => sol.status = QpStatus::MaxIterations,
    }
    Ok(sol)
}

/// Solves an LP with the active-set method.
pub fn solve_lp(problem: &LinearProgram, settings: &QpSettings) -> Result<QpSolution> {
    let qp = problem.as_qp();
    qp.validate()?;
    let reduced = Reduced::new(&qp)?;
    if let Some(cert) = reduced.inconsistent_equalities() {
        return Ok(QpSolution::infeasible(&qp, cert));
    }
    let rows = reduced.ineq_rows();
    let phase1 = simplex::phase_one(&rows, settings)?;
    if phase1.margin > FEASIBILITY_MARGIN {
        let cert = reduced.certificate_from_rows(&qp, &phase1.multipliers);
        return Ok(QpSolution::infeasible(&qp, cert));
    }
    let phase2 = simplex::minimize(&rows, &reduced.linear, &phase1.point, phase1.margin.max(0.0), settings)?;
    let mut sol = reduced.recover(&qp, &phase2.point, &rows.signed_duals(&phase2.multipliers), settings);
    sol.iterations = phase1.iterations + phase2.iterations;
    sol.status = phase2.status;
    Ok(sol)
}

/// Phase-1 feasibility of `{z : E z = e, G z <= g}`: minimizes the largest
/// constraint violation `s` and reports it as the margin.
pub fn feasibility_check(
    eq_lhs: &DMatrix<f64>,
    eq_rhs: &DVector<f64>,
    ineq_lhs: &DMatrix<f64>,
    ineq_rhs: &DVector<f64>,
) -> Result<FeasibilityResult> {
    let lower = DVector::from_element(ineq_rhs.len(), f64::NEG_INFINITY);
    feasibility_check_two_sided(eq_lhs, eq_rhs, ineq_lhs, &lower, ineq_rhs)
}

/// Same as [`feasibility_check`] for two-sided rows `l <= G z <= u`.
pub fn feasibility_check_two_sided(
    eq_lhs: &DMatrix<f64>,
    eq_rhs: &DVector<f64>,
    ineq_lhs: &DMatrix<f64>,
    ineq_lower: &DVector<f64>,
    ineq_upper: &DVector<f64>,
) -> Result<FeasibilityResult> {
    let nvar = ineq_lhs.ncols().max(eq_lhs.ncols());
    let qp = QuadraticProgram::new_two_sided(
        DMatrix::zeros(nvar, nvar),
        DVector::zeros(nvar),
        eq_lhs.clone(),
        eq_rhs.clone(),
        ineq_lhs.clone(),
        ineq_lower.clone(),
        ineq_upper.clone(),
    )?;
    feasibility_of(&qp)
}

/// Phase-1 feasibility of the constraint set of a QP (objective ignored).
pub fn feasibility_of(problem: &QuadraticProgram) -> Result<FeasibilityResult> {
    problem.validate_constraints()?;
    let reduced = Reduced::new(problem)?;
    if let Some(cert) = reduced.inconsistent_equalities() {
        return Ok(FeasibilityResult {
            feasible: false,
            margin: cert.equality_residual,
            point: None,
        });
    }
    let phase1 = simplex::phase_one(&reduced.ineq_rows(), &QpSettings::default())?;
    let feasible = phase1.margin <= FEASIBILITY_MARGIN;
    if !phase1.margin.is_finite() {
        return Err(Error::Solver("phase-1 LP returned a non-finite margin".into()));
    }
    Ok(FeasibilityResult {
        feasible,
        margin: phase1.margin,
        point: Some(reduced.lift(&phase1.point)),
    })
}

#[cfg(test)]
mod tests;
