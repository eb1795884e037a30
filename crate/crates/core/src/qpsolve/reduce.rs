//! Equality elimination: `z = z0 + N y` with `N` an orthonormal null-space
//! basis of `E`.

use nalgebra::{DMatrix, DVector};

use super::problem::{InfeasibilityCertificate, KktResiduals, QpSettings, QpSolution, QpStatus, QuadraticProgram};
use crate::error::Result;
use crate::linalg::{inf_norm, nullspace_solve};

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub(crate) struct Reduced {
    z0: DVector<f64>,
    basis: DMatrix<f64>,
    eq_residual: f64,
    eq_gap: DVector<f64>,
    eq_scale: f64,
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub rows: DMatrix<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

/// One-sided rows `a_i · y <= b_i` derived from the two-sided reduced rows.
#[derive(Debug, Clone)]
pub(crate) struct IneqRows {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// (original row, +1 for an upper bound, -1 for a lower bound)
    pub origin: Vec<(usize, f64)>,
    pub num_orig: usize,
}

impl IneqRows {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Folds nonnegative one-sided multipliers into signed two-sided ones.
    pub fn signed_duals(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_orig);
        for (k, &(i, s)) in self.origin.iter().enumerate() {
            out[i] += s * y[k];
        }
        out
    }
}

impl Reduced {
    pub fn new(qp: &QuadraticProgram) -> Result<Self> {
        let n = qp.num_vars();
        let (z0, basis, eq_residual) = if qp.num_eq() == 0 {
            (DVector::zeros(n), DMatrix::identity(n, n), 0.0)
        } else {
            nullspace_solve(&qp.eq_lhs, &qp.eq_rhs, RANK_TOL)
        };
        let eq_gap = if qp.num_eq() == 0 { DVector::zeros(0) } else { &qp.eq_lhs * &z0 - &qp.eq_rhs };
        let eq_scale = 1.0 + inf_norm(&qp.eq_rhs);
        let hz0 = &qp.hessian * &z0;
        let hessian = basis.transpose() * &qp.hessian * &basis;
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        let linear = basis.transpose() * (hz0 + &qp.linear);
        let rows = &qp.ineq_lhs * &basis;
        let shift = &qp.ineq_lhs * &z0;
        let lower = &qp.ineq_lower - &shift;
        let upper = &qp.ineq_rhs - &shift;
        Ok(Reduced {
            z0,
            basis,
            eq_residual,
            eq_gap,
            eq_scale,
            hessian,
            linear,
            rows,
            lower,
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Certificate when `E z = e` has no solution at all.
    pub fn inconsistent_equalities(&self) -> Option<InfeasibilityCertificate> {
        if self.eq_residual <= 1e-9 * self.eq_scale {
            return None;
        }
        // The least-squares residual r = E z0 - e satisfies Eᵀr = 0 and
        // rᵀe = -‖r‖² < 0.
        let r = &self.eq_gap;
        Some(InfeasibilityCertificate {
            ineq: DVector::zeros(self.rows.nrows()),
            eq: r.clone(),
            residual: 0.0,
            contradiction: -r.norm_squared(),
            equality_residual: self.eq_residual,
        })
    }

    pub fn ineq_rows(&self) -> IneqRows {
        let m = self.rows.nrows();
        let r = self.dim();
        let mut data = Vec::new();
        let mut b = Vec::new();
        let mut origin = Vec::new();
        for i in 0..m {
            if self.upper[i].is_finite() {
                data.push(self.rows.row(i).into_owned());
                b.push(self.upper[i]);
                origin.push((i, 1.0));
            }
            if self.lower[i].is_finite() {
                data.push(-self.rows.row(i).into_owned());
                b.push(-self.lower[i]);
                origin.push((i, -1.0));
            }
        }
        let a = if data.is_empty() {
            DMatrix::zeros(0, r)
        } else {
            DMatrix::from_rows(&data)
        };
        IneqRows {
            a,
            b: DVector::from_vec(b),
            origin,
            num_orig: m,
        }
    }

    pub fn lift(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.z0 + &self.basis * y
    }

    /// Equality multipliers solving `Eᵀλ = -g` in the least-squares sense.
    fn eq_multipliers(qp: &QuadraticProgram, g: &DVector<f64>) -> DVector<f64> {
        if qp.num_eq() == 0 {
            return DVector::zeros(0);
        }
        let et = qp.eq_lhs.transpose();
        let svd = et.svd(true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        svd.solve(&(-g), RANK_TOL * smax.max(f64::MIN_POSITIVE))
            .unwrap_or_else(|_| DVector::zeros(qp.num_eq()))
    }

    pub fn certificate_from_rows(&self, qp: &QuadraticProgram, y_rows: &DVector<f64>) -> InfeasibilityCertificate {
        let signed = self.ineq_rows().signed_duals(y_rows);
        let g = if qp.num_ineq() > 0 {
            qp.ineq_lhs.transpose() * &signed
        } else {
            DVector::zeros(qp.num_vars())
        };
        let lambda = Self::eq_multipliers(qp, &g);
        InfeasibilityCertificate::from_multipliers(qp, signed, lambda)
    }

    /// Maps a reduced primal/dual pair back to the original problem.
    pub fn recover(&self, qp: &QuadraticProgram, y: &DVector<f64>, mu: &DVector<f64>, _s: &QpSettings) -> QpSolution {
        let z = self.lift(y);
        let mut g = &qp.hessian * &z + &qp.linear;
        if qp.num_ineq() > 0 {
            g += qp.ineq_lhs.transpose() * mu;
        }
        let lambda = Self::eq_multipliers(qp, &g);
        let kkt = KktResiduals::compute(qp, &z, &lambda, mu);
        QpSolution {
            objective: qp.objective_value(&z),
            primal: z,
            dual_eq: lambda,
            dual_ineq: mu.clone(),
            status: QpStatus::Optimal,
            kkt,
            iterations: 0,
            certificate: None,
        }
    }
}
