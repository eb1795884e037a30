//! Comparison controllers: nominal MPC, tube MPC and fixed-gain affine
//! disturbance feedback (ADF) MPC.

use nalgebra::{DMatrix, DVector};
use serde_json::json;

use crate::controller::{solve_checked, ControlDecision, Controller};
use crate::drmpc::{TerminalCondition, TerminalKind};
use crate::error::{Error, Result};
use crate::geometry::{max_pi_set, max_rpi_set, minkowski_sum, mrpi_approx, pontryagin_diff, HPolytope, VPolytope};
use crate::horizon::{add_stage_sets, trajectory_builder, trajectory_value, Layout, TerminalRows};
use crate::linalg::mat_to_rows;
use crate::plant::{LqrIngredients, ProblemSpec};
use crate::qpsolve::{QpSettings, QpStatus, QuadraticProgram};

/// Precision of the mRPI outer approximation used for the tube.
pub const MRPI_EPS: f64 = 1e-3;

const INVARIANT_MAX_ITER: usize = 1000;

fn layout(spec: &ProblemSpec, free_initial: bool) -> Layout {
    Layout {
        n: spec.n(),
        m: spec.m(),
        horizon: spec.horizon_n,
        free_initial,
    }
}

fn nonempty(set: HPolytope, what: &str) -> Result<HPolytope> {
    if set.is_empty()? {
        return Err(Error::SynthesisInfeasible(format!(
            "tightened {what} set is empty (disturbance too large for constraints)"
        )));
    }
    Ok(set)
}

/// Maximal PI set of `A + BK` inside `{x ∈ x_set, Kx ∈ u_set}` with the
/// Riccati terminal cost.
fn lqr_terminal(spec: &ProblemSpec, lq: &LqrIngredients, x_set: &HPolytope, u_set: &HPolytope) -> Result<TerminalCondition> {
    let admissible = x_set.intersect(&u_set.preimage(&lq.gain)?)?;
    Ok(TerminalCondition::PiSet {
        set: max_pi_set(&lq.closed_loop(&spec.system), &admissible, INVARIANT_MAX_ITER)?,
        cost_p: lq.riccati_p.clone(),
        gain: lq.gain.clone(),
    })
}

fn terminal_rows(t: &TerminalCondition) -> TerminalRows<'_> {
    match t {
        TerminalCondition::Origin => TerminalRows::Origin,
        TerminalCondition::PiSet { set, cost_p, .. } => TerminalRows::Set { set, cost_p },
    }
}

fn terminal_p(t: &TerminalCondition) -> Option<&DMatrix<f64>> {
    match t {
        TerminalCondition::Origin => None,
        TerminalCondition::PiSet { cost_p, .. } => Some(cost_p),
    }
}

/// Standard MPC with the untightened constraints (the disturbance is ignored).
#[derive(Debug, Clone)]
pub struct NominalController {
    spec: ProblemSpec,
    terminal: TerminalCondition,
    settings: QpSettings,
}

pub fn build_nominal(spec: &ProblemSpec, terminal: TerminalKind) -> Result<NominalController> {
    let terminal = match terminal {
        TerminalKind::Origin => TerminalCondition::Origin,
        TerminalKind::PiSet => {
            let lq = crate::plant::lqr(&spec.system, &spec.cost)?;
            lqr_terminal(spec, &lq, &spec.x_set, &spec.u_set)?
        }
    };
    Ok(NominalController {
        spec: spec.clone(),
        terminal,
        settings: QpSettings::default(),
    })
}

impl NominalController {
    pub fn terminal(&self) -> &TerminalCondition {
        &self.terminal
    }
}

impl Controller for NominalController {
    fn id(&self) -> &'static str {
        "nominal"
    }

    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn build_qp(&self, x: &DVector<f64>) -> Result<QuadraticProgram> {
        let lay = layout(&self.spec, false);
        let mut qp = trajectory_builder(&self.spec.system, &self.spec.cost, lay, 0, x, &terminal_rows(&self.terminal))?;
        let n = self.spec.horizon_n;
        add_stage_sets(&mut qp, lay, &vec![self.spec.u_set.clone(); n], &vec![self.spec.x_set.clone(); n]);
        qp.build()
    }

    fn decide(&self, x: &DVector<f64>) -> Result<ControlDecision> {
        let qp = self.build_qp(x)?;
        let Some(primal) = solve_checked(&qp, &self.settings, self.id())? else {
            return Ok(ControlDecision::infeasible(self.spec.m()));
        };
        let lay = layout(&self.spec, false);
        let (inputs, states) = (lay.inputs(&primal), lay.states(&primal, x));
        Ok(ControlDecision {
            input: inputs[0].clone(),
            value: trajectory_value(&self.spec.cost, &inputs, &states, terminal_p(&self.terminal)),
            status: QpStatus::Optimal,
            full_solution: Some(primal),
        })
    }

    fn export(&self) -> serde_json::Value {
        json!({
            "type": self.id(),
            "horizon_n": self.spec.horizon_n,
            "terminal": self.terminal.to_json(),
        })
    }
}

/// Tube MPC with a free initial center: `x ∈ z_0 ⊕ F`, nominal trajectory
/// in `X ⊖ F`, `U ⊖ K F`, applied input `v_0 + K (x − z_0)`.
#[derive(Debug, Clone)]
pub struct TubeController {
    spec: ProblemSpec,
    gain: DMatrix<f64>,
    mrpi: VPolytope,
    mrpi_h: HPolytope,
    tightened_x: HPolytope,
    tightened_u: HPolytope,
    terminal: TerminalCondition,
    settings: QpSettings,
}

pub fn build_tube(spec: &ProblemSpec, lq: &LqrIngredients) -> Result<TubeController> {
    let ak = lq.closed_loop(&spec.system);
    let mrpi = mrpi_approx(&ak, &spec.d_set, MRPI_EPS)?;
    let mrpi_h = mrpi.to_hpolytope()?;
    let tightened_x = nonempty(pontryagin_diff(&spec.x_set, &mrpi)?, "tube state")?;
    let tightened_u = nonempty(pontryagin_diff(&spec.u_set, &mrpi.linear_map(&lq.gain)?)?, "tube input")?;
    let terminal = lqr_terminal(spec, lq, &tightened_x, &tightened_u)?;
    Ok(TubeController {
        spec: spec.clone(),
        gain: lq.gain.clone(),
        mrpi,
        mrpi_h,
        tightened_x,
        tightened_u,
        terminal,
        settings: QpSettings::default(),
    })
}

impl TubeController {
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// Outer mRPI approximation `F`.
    pub fn mrpi(&self) -> &VPolytope {
        &self.mrpi
    }

    pub fn tightened_x(&self) -> &HPolytope {
        &self.tightened_x
    }

    pub fn tightened_u(&self) -> &HPolytope {
        &self.tightened_u
    }

    pub fn terminal(&self) -> &TerminalCondition {
        &self.terminal
    }

    /// Optimal initial center `z*_0` of a decision.
    pub fn center(&self, decision: &ControlDecision) -> Option<DVector<f64>> {
        let lay = layout(&self.spec, true);
        decision.full_solution.as_ref().map(|p| p.rows(lay.x0(), lay.n).into_owned())
    }
}

impl Controller for TubeController {
    fn id(&self) -> &'static str {
        "tube"
    }

    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn build_qp(&self, x: &DVector<f64>) -> Result<QuadraticProgram> {
        let lay = layout(&self.spec, true);
        let mut qp = trajectory_builder(&self.spec.system, &self.spec.cost, lay, 0, x, &terminal_rows(&self.terminal))?;
        let n = self.spec.horizon_n;
        add_stage_sets(&mut qp, lay, &vec![self.tightened_u.clone(); n], &vec![self.tightened_x.clone(); n]);
        let slabs = self.mrpi_h.to_slabs();
        for r in 0..slabs.rows.nrows() {
            let a = slabs.rows.row(r);
            let ax: f64 = (0..lay.n).map(|c| a[c] * x[c]).sum();
            let row = (0..lay.n).map(|c| (lay.x0() + c, a[c])).collect();
            qp.add_ineq(row, ax - slabs.hi[r], ax - slabs.lo[r]);
        }
        qp.build()
    }

    fn decide(&self, x: &DVector<f64>) -> Result<ControlDecision> {
        let qp = self.build_qp(x)?;
        let Some(primal) = solve_checked(&qp, &self.settings, self.id())? else {
            return Ok(ControlDecision::infeasible(self.spec.m()));
        };
        let lay = layout(&self.spec, true);
        let (inputs, states) = (lay.inputs(&primal), lay.states(&primal, x));
        let input = &inputs[0] + &self.gain * (x - &states[0]);
        Ok(ControlDecision {
            input,
            value: trajectory_value(&self.spec.cost, &inputs, &states, terminal_p(&self.terminal)),
            status: QpStatus::Optimal,
            full_solution: Some(primal),
        })
    }

    fn export(&self) -> serde_json::Value {
        json!({
            "type": self.id(),
            "horizon_n": self.spec.horizon_n,
            "gain": mat_to_rows(&self.gain),
            "mrpi": self.mrpi,
            "tightened_x": self.tightened_x,
            "tightened_u": self.tightened_u,
            "terminal": self.terminal.to_json(),
        })
    }
}

/// Fixed-gain ADF MPC: per-step tightening by the reachable error sets
/// `R_k = ⊕_{i<k} (A+BK)^i D`.
#[derive(Debug, Clone)]
pub struct AdfController {
    spec: ProblemSpec,
    gain: DMatrix<f64>,
    reach_sets: Vec<VPolytope>,
    /// `X ⊖ R_k` for `k = 0..=N`
    tightened_x: Vec<HPolytope>,
    /// `U ⊖ K R_k` for `k = 0..=N`
    tightened_u: Vec<HPolytope>,
    terminal: TerminalCondition,
    settings: QpSettings,
}

pub fn build_adf(spec: &ProblemSpec, lq: &LqrIngredients) -> Result<AdfController> {
    let ak = lq.closed_loop(&spec.system);
    let big_n = spec.horizon_n;
    let mut reach_sets = vec![VPolytope::origin(spec.n())];
    let mut power = DMatrix::identity(spec.n(), spec.n());
    for _ in 0..big_n {
        let next = minkowski_sum(reach_sets.last().unwrap(), &spec.d_set.linear_map(&power)?)?;
        reach_sets.push(next);
        power = &ak * power;
    }
    let mut tightened_x = Vec::with_capacity(big_n + 1);
    let mut tightened_u = Vec::with_capacity(big_n + 1);
    for (k, r) in reach_sets.iter().enumerate() {
        tightened_x.push(nonempty(pontryagin_diff(&spec.x_set, r)?, &format!("ADF state (step {k})"))?);
        tightened_u.push(nonempty(pontryagin_diff(&spec.u_set, &r.linear_map(&lq.gain)?)?, &format!("ADF input (step {k})"))?);
    }
    // Terminal set robust to the error still propagating after N steps:
    // (A+BK) Ω ⊕ (A+BK)^N D ⊆ Ω inside the horizon-level tightened sets.
    let admissible = tightened_x[big_n].intersect(&tightened_u[big_n].preimage(&lq.gain)?)?;
    let tail = spec.d_set.linear_map(&power)?;
    let set = max_rpi_set(&ak, &admissible, &tail, INVARIANT_MAX_ITER)?;
    Ok(AdfController {
        spec: spec.clone(),
        gain: lq.gain.clone(),
        reach_sets,
        tightened_x,
        tightened_u,
        terminal: TerminalCondition::PiSet {
            set,
            cost_p: lq.riccati_p.clone(),
            gain: lq.gain.clone(),
        },
        settings: QpSettings::default(),
    })
}

impl AdfController {
    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn reach_sets(&self) -> &[VPolytope] {
        &self.reach_sets
    }

    pub fn tightened_x(&self) -> &[HPolytope] {
        &self.tightened_x
    }

    pub fn tightened_u(&self) -> &[HPolytope] {
        &self.tightened_u
    }

    pub fn terminal(&self) -> &TerminalCondition {
        &self.terminal
    }
}

impl Controller for AdfController {
    fn id(&self) -> &'static str {
        "adf"
    }

    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn build_qp(&self, x: &DVector<f64>) -> Result<QuadraticProgram> {
        let lay = layout(&self.spec, false);
        let mut qp = trajectory_builder(&self.spec.system, &self.spec.cost, lay, 0, x, &terminal_rows(&self.terminal))?;
        let n = self.spec.horizon_n;
        add_stage_sets(&mut qp, lay, &self.tightened_u[..n], &self.tightened_x[1..=n]);
        qp.build()
    }

    fn decide(&self, x: &DVector<f64>) -> Result<ControlDecision> {
        let qp = self.build_qp(x)?;
        let Some(primal) = solve_checked(&qp, &self.settings, self.id())? else {
            return Ok(ControlDecision::infeasible(self.spec.m()));
        };
        let lay = layout(&self.spec, false);
        let (inputs, states) = (lay.inputs(&primal), lay.states(&primal, x));
        Ok(ControlDecision {
            input: inputs[0].clone(),
            value: trajectory_value(&self.spec.cost, &inputs, &states, terminal_p(&self.terminal)),
            status: QpStatus::Optimal,
            full_solution: Some(primal),
        })
    }

    fn export(&self) -> serde_json::Value {
        json!({
            "type": self.id(),
            "horizon_n": self.spec.horizon_n,
            "gain": mat_to_rows(&self.gain),
            "reach_sets": self.reach_sets,
            "tightened_x": self.tightened_x,
            "tightened_u": self.tightened_u,
            "terminal": self.terminal.to_json(),
        })
    }
}

#[cfg(test)]
mod tests;
