use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite_mat, all_finite_vec, inf_norm, mat_from_rows, mat_to_rows, min_sym_eigenvalue, vec_to_vec};

/// Standard-form convex QP; see the module docs for the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_lhs: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_lhs: DMatrix<f64>,
    /// Lower row bounds; `-inf` for one-sided rows.
    pub ineq_lower: DVector<f64>,
    /// Upper row bounds.
    pub ineq_rhs: DVector<f64>,
}

/// `minimize cᵀz` over the same constraint layout as [`QuadraticProgram`].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: DVector<f64>,
    pub eq_lhs: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_lhs: DMatrix<f64>,
    pub ineq_lower: DVector<f64>,
    pub ineq_rhs: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
}

impl std::fmt::Display for QpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            QpStatus::Optimal => "Optimal",
            QpStatus::PrimalInfeasible => "PrimalInfeasible",
            QpStatus::DualInfeasible => "DualInfeasible",
            QpStatus::MaxIterations => "MaxIterations",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    /// ADMM step size (initial; adapted during the run).
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor.
    pub alpha: f64,
    pub scaling_iters: usize,
    pub check_every: usize,
    pub polish: bool,
    /// Infeasibility-detection tolerance for ADMM certificates.
    pub eps_infeasible: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            max_iter: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            scaling_iters: 15,
            check_every: 10,
            polish: true,
            eps_infeasible: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `‖H z + f + Eᵀλ + Gᵀμ‖∞`
    pub stationarity: f64,
    /// largest equality or bound violation
    pub primal: f64,
    /// largest multiplier sign violation
    pub dual: f64,
    /// largest `|μ_i| * slack_i` on the side indicated by the sign of `μ_i`
    pub complementarity: f64,
}

/// Farkas-type proof of primal infeasibility: `Gᵀy + Eᵀλ = 0` while the
/// bound combination `Σ_i (y_i > 0 ? y_i u_i : y_i l_i) + λᵀe` is negative.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate {
    pub ineq: DVector<f64>,
    pub eq: DVector<f64>,
    /// `‖Gᵀy + Eᵀλ‖∞` (should be ~0).
    pub residual: f64,
    /// The bound combination; negative for a valid certificate.
    pub contradiction: f64,
    /// Least-squares residual of `E z = e` when the equalities alone are
    /// inconsistent, zero otherwise.
    pub equality_residual: f64,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub primal: DVector<f64>,
    pub dual_eq: DVector<f64>,
    pub dual_ineq: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub certificate: Option<InfeasibilityCertificate>,
}

#[derive(Debug, Clone)]
pub struct FeasibilityResult {
    pub feasible: bool,
    /// Optimal largest constraint violation (negative: strictly interior).
    pub margin: f64,
    /// Minimizer of the largest violation, when one was computed.
    pub point: Option<DVector<f64>>,
}

impl QuadraticProgram {
    /// One-sided inequalities `G z <= g`.
    pub fn new(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        eq_lhs: DMatrix<f64>,
        eq_rhs: DVector<f64>,
        ineq_lhs: DMatrix<f64>,
        ineq_rhs: DVector<f64>,
    ) -> Result<Self> {
        let lower = DVector::from_element(ineq_rhs.len(), f64::NEG_INFINITY);
        Self::new_two_sided(hessian, linear, eq_lhs, eq_rhs, ineq_lhs, lower, ineq_rhs)
    }

    pub fn new_two_sided(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        eq_lhs: DMatrix<f64>,
        eq_rhs: DVector<f64>,
        ineq_lhs: DMatrix<f64>,
        ineq_lower: DVector<f64>,
        ineq_rhs: DVector<f64>,
    ) -> Result<Self> {
        let n = linear.len();
        let eq_lhs = if eq_lhs.nrows() == 0 { DMatrix::zeros(0, n) } else { eq_lhs };
        let ineq_lhs = if ineq_lhs.nrows() == 0 { DMatrix::zeros(0, n) } else { ineq_lhs };
        let qp = QuadraticProgram {
            hessian,
            linear,
            eq_lhs,
            eq_rhs,
            ineq_lhs,
            ineq_lower,
            ineq_rhs,
        };
        qp.check_shapes()?;
        Ok(qp)
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn num_eq(&self) -> usize {
        self.eq_rhs.len()
    }

    pub fn num_ineq(&self) -> usize {
        self.ineq_rhs.len()
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.num_vars();
        let checks = [
            ("hessian rows", n, self.hessian.nrows()),
            ("hessian cols", n, self.hessian.ncols()),
            ("eq_lhs cols", n, self.eq_lhs.ncols()),
            ("eq_rhs", self.eq_lhs.nrows(), self.eq_rhs.len()),
            ("ineq_lhs cols", n, self.ineq_lhs.ncols()),
            ("ineq_rhs", self.ineq_lhs.nrows(), self.ineq_rhs.len()),
            ("ineq_lower", self.ineq_lhs.nrows(), self.ineq_lower.len()),
        ];
        for (ctx, expected, got) in checks {
            if expected != got {
                return Err(Error::dim(ctx, expected, got));
            }
        }
        Ok(())
    }

    pub(crate) fn validate_constraints(&self) -> Result<()> {
        self.check_shapes()?;
        if !all_finite_mat(&self.eq_lhs) || !all_finite_vec(&self.eq_rhs) || !all_finite_mat(&self.ineq_lhs) {
            return Err(Error::InvalidInput("non-finite constraint data".into()));
        }
        for i in 0..self.num_ineq() {
            let (l, u) = (self.ineq_lower[i], self.ineq_rhs[i]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::InvalidInput(format!("row {i}: invalid bounds [{l}, {u}]")));
            }
        }
        Ok(())
    }

    /// Shape, finiteness, symmetry (1e-12) and PSD (eigenvalue floor -1e-9).
    pub fn validate(&self) -> Result<()> {
        self.validate_constraints()?;
        if !all_finite_mat(&self.hessian) || !all_finite_vec(&self.linear) {
            return Err(Error::InvalidInput("non-finite objective data".into()));
        }
        let asym = (&self.hessian - self.hessian.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::InvalidInput(format!("hessian not symmetric (max asymmetry {asym:e})")));
        }
        if self.hessian.amax() > 0.0 {
            let lmin = min_sym_eigenvalue(&self.hessian);
            if lmin < -1e-9 {
                return Err(Error::InvalidInput(format!("hessian not PSD (min eigenvalue {lmin:e})")));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.linear.dot(z)
    }

    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        if self.num_eq() > 0 {
            v = v.max(inf_norm(&(&self.eq_lhs * z - &self.eq_rhs)));
        }
        if self.num_ineq() > 0 {
            let gz = &self.ineq_lhs * z;
            for i in 0..self.num_ineq() {
                v = v.max(gz[i] - self.ineq_rhs[i]).max(self.ineq_lower[i] - gz[i]);
            }
        }
        v
    }

    /// Serializable mirror with `null` standing in for infinite bounds.
    pub fn to_dump(&self) -> QpDump {
        let bound = |v: &DVector<f64>| v.iter().map(|&x| if x.is_finite() { Some(x) } else { None }).collect();
        QpDump {
            hessian: mat_to_rows(&self.hessian),
            linear: vec_to_vec(&self.linear),
            eq_lhs: mat_to_rows(&self.eq_lhs),
            eq_rhs: vec_to_vec(&self.eq_rhs),
            ineq_lhs: mat_to_rows(&self.ineq_lhs),
            ineq_lower: bound(&self.ineq_lower),
            ineq_rhs: bound(&self.ineq_rhs),
        }
    }

    pub fn from_dump(d: &QpDump) -> Result<Self> {
        let n = d.linear.len();
        let mat = |rows: &Vec<Vec<f64>>| -> Result<DMatrix<f64>> {
            if rows.is_empty() {
                Ok(DMatrix::zeros(0, n))
            } else {
                mat_from_rows(rows)
            }
        };
        let lo = d.ineq_lower.iter().map(|x| x.unwrap_or(f64::NEG_INFINITY)).collect::<Vec<_>>();
        let hi = d.ineq_rhs.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect::<Vec<_>>();
        QuadraticProgram::new_two_sided(
            mat(&d.hessian)?,
            DVector::from_vec(d.linear.clone()),
            mat(&d.eq_lhs)?,
            DVector::from_vec(d.eq_rhs.clone()),
            mat(&d.ineq_lhs)?,
            DVector::from_vec(lo),
            DVector::from_vec(hi),
        )
    }
}

/// JSON form of a QP for external cross-checking.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpDump {
    pub hessian: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
    pub eq_lhs: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
    pub ineq_lhs: Vec<Vec<f64>>,
    pub ineq_lower: Vec<Option<f64>>,
    pub ineq_rhs: Vec<Option<f64>>,
}

impl LinearProgram {
    pub fn new(
        objective: DVector<f64>,
        eq_lhs: DMatrix<f64>,
        eq_rhs: DVector<f64>,
        ineq_lhs: DMatrix<f64>,
        ineq_rhs: DVector<f64>,
    ) -> Result<Self> {
        let lower = DVector::from_element(ineq_rhs.len(), f64::NEG_INFINITY);
        Self::new_two_sided(objective, eq_lhs, eq_rhs, ineq_lhs, lower, ineq_rhs)
    }

    pub fn new_two_sided(
        objective: DVector<f64>,
        eq_lhs: DMatrix<f64>,
        eq_rhs: DVector<f64>,
        ineq_lhs: DMatrix<f64>,
        ineq_lower: DVector<f64>,
        ineq_rhs: DVector<f64>,
    ) -> Result<Self> {
        let qp = QuadraticProgram::new_two_sided(
            DMatrix::zeros(objective.len(), objective.len()),
            objective,
            eq_lhs,
            eq_rhs,
            ineq_lhs,
            ineq_lower,
            ineq_rhs,
        )?;
        Ok(LinearProgram {
            objective: qp.linear,
            eq_lhs: qp.eq_lhs,
            eq_rhs: qp.eq_rhs,
            ineq_lhs: qp.ineq_lhs,
            ineq_lower: qp.ineq_lower,
            ineq_rhs: qp.ineq_rhs,
        })
    }

    pub fn as_qp(&self) -> QuadraticProgram {
        let n = self.objective.len();
        QuadraticProgram {
            hessian: DMatrix::zeros(n, n),
            linear: self.objective.clone(),
            eq_lhs: self.eq_lhs.clone(),
            eq_rhs: self.eq_rhs.clone(),
            ineq_lhs: self.ineq_lhs.clone(),
            ineq_lower: self.ineq_lower.clone(),
            ineq_rhs: self.ineq_rhs.clone(),
        }
    }
}

impl KktResiduals {
    pub fn compute(qp: &QuadraticProgram, z: &DVector<f64>, lambda: &DVector<f64>, mu: &DVector<f64>) -> Self {
        let mut grad = &qp.hessian * z + &qp.linear;
        if qp.num_eq() > 0 {
            grad += qp.eq_lhs.transpose() * lambda;
        }
        let mut dual: f64 = 0.0;
        let mut comp: f64 = 0.0;
        if qp.num_ineq() > 0 {
            grad += qp.ineq_lhs.transpose() * mu;
            let gz = &qp.ineq_lhs * z;
            for i in 0..qp.num_ineq() {
                let m = mu[i];
                if m > 0.0 {
                    if qp.ineq_rhs[i].is_finite() {
                        comp = comp.max(m * (qp.ineq_rhs[i] - gz[i]).abs());
                    } else {
                        dual = dual.max(m);
                    }
                } else if m < 0.0 {
                    if qp.ineq_lower[i].is_finite() {
                        comp = comp.max(-m * (gz[i] - qp.ineq_lower[i]).abs());
                    } else {
                        dual = dual.max(-m);
                    }
                }
            }
        }
        KktResiduals {
            stationarity: inf_norm(&grad),
            primal: qp.max_violation(z).max(0.0),
            dual,
            complementarity: comp,
        }
    }

    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }

    /// Absolute tolerance plus a relative part scaled by the data magnitude
    /// of each residual.
    pub fn passes(&self, qp: &QuadraticProgram, sol: &QpSolution, s: &QpSettings) -> bool {
        let z = &sol.primal;
        let mut stat_scale = inf_norm(&(&qp.hessian * z)).max(inf_norm(&qp.linear));
        let mut prim_scale: f64 = 0.0;
        if qp.num_ineq() > 0 {
            stat_scale = stat_scale.max(inf_norm(&(qp.ineq_lhs.transpose() * &sol.dual_ineq)));
            prim_scale = prim_scale.max(inf_norm(&(&qp.ineq_lhs * z)));
        }
        if qp.num_eq() > 0 {
            stat_scale = stat_scale.max(inf_norm(&(qp.eq_lhs.transpose() * &sol.dual_eq)));
            prim_scale = prim_scale.max(inf_norm(&qp.eq_rhs));
        }
        let comp_scale = inf_norm(&sol.dual_ineq) * prim_scale.max(1.0);
        self.stationarity <= s.eps_abs + s.eps_rel * stat_scale
            && self.primal <= s.eps_abs + s.eps_rel * prim_scale
            && self.dual <= s.eps_abs
            && self.complementarity <= s.eps_abs + s.eps_rel * comp_scale
    }
}

impl QpSolution {
    pub(crate) fn infeasible(qp: &QuadraticProgram, cert: InfeasibilityCertificate) -> Self {
        QpSolution {
            primal: DVector::from_element(qp.num_vars(), f64::NAN),
            dual_eq: DVector::zeros(qp.num_eq()),
            dual_ineq: DVector::zeros(qp.num_ineq()),
            objective: f64::INFINITY,
            status: QpStatus::PrimalInfeasible,
            kkt: KktResiduals::default(),
            iterations: 0,
            certificate: Some(cert),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

impl InfeasibilityCertificate {
    /// Recomputes residual and contradiction from raw multipliers.
    pub fn from_multipliers(qp: &QuadraticProgram, ineq: DVector<f64>, eq: DVector<f64>) -> Self {
        let mut combo = DVector::zeros(qp.num_vars());
        if qp.num_ineq() > 0 {
            combo += qp.ineq_lhs.transpose() * &ineq;
        }
        if qp.num_eq() > 0 {
            combo += qp.eq_lhs.transpose() * &eq;
        }
        let mut contradiction = 0.0;
        for i in 0..qp.num_ineq() {
            let y = ineq[i];
            if y > 0.0 {
                contradiction += y * qp.ineq_rhs[i];
            } else if y < 0.0 {
                contradiction += y * qp.ineq_lower[i];
            }
        }
        if qp.num_eq() > 0 {
            contradiction += eq.dot(&qp.eq_rhs);
        }
        InfeasibilityCertificate {
            residual: inf_norm(&combo),
            ineq,
            eq,
            contradiction,
            equality_residual: 0.0,
        }
    }
}
