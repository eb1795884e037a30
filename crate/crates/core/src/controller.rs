//! Common interface of every receding-horizon controller in the crate.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::plant::ProblemSpec;
use crate::qpsolve::{self, FeasibilityResult, QpSettings, QpStatus, QuadraticProgram};

/// Outcome of one receding-horizon solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    /// Input to apply; zero when the problem is infeasible.
    pub input: DVector<f64>,
    /// Optimal value `V*_N`, including the stage cost at the current state;
    /// `inf` when infeasible.
    pub value: f64,
    pub status: QpStatus,
    /// Primal stack of the solved QP (`Optimal` only).
    pub full_solution: Option<DVector<f64>>,
}

impl ControlDecision {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }

    pub(crate) fn infeasible(m: usize) -> Self {
        ControlDecision {
            input: DVector::zeros(m),
            value: f64::INFINITY,
            status: QpStatus::PrimalInfeasible,
            full_solution: None,
        }
    }
}

/// Solves `qp` and separates infeasibility (a reportable outcome) from
/// solver failure (an error).
pub(crate) fn solve_checked(qp: &QuadraticProgram, settings: &QpSettings, what: &str) -> Result<Option<DVector<f64>>> {
    let sol = qpsolve::solve_qp(qp, settings)?;
    match sol.status {
        QpStatus::Optimal => Ok(Some(sol.primal)),
        QpStatus::PrimalInfeasible => Ok(None),
        s => Err(Error::Solver(format!(
            "{what}: solver returned {s} after {} iterations (KKT residual {:.3e})",
            sol.iterations,
            sol.kkt.max()
        ))),
    }
}

/// A controller maps a measured state to an input by solving a QP.
///
/// Implementations are immutable; `decide` may be called concurrently.
pub trait Controller: Send + Sync {
    /// Short label such as `drmpc-online`.
    fn id(&self) -> &'static str;

    fn spec(&self) -> &ProblemSpec;

    /// The QP solved at state `x`.
    fn build_qp(&self, x: &DVector<f64>) -> Result<QuadraticProgram>;

    fn decide(&self, x: &DVector<f64>) -> Result<ControlDecision>;

    /// Phase-1 feasibility of the problem at `x`.
    fn feasibility(&self, x: &DVector<f64>) -> Result<FeasibilityResult> {
        qpsolve::feasibility_of(&self.build_qp(x)?)
    }

    /// Audit export (tightened sets, terminal data).
    fn export(&self) -> serde_json::Value;
}
