//! Online and offline DRMPC problems and the receding-horizon law.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::controller::{solve_checked, ControlDecision, Controller};
use crate::deadbeat::{accumulated_tightening, barycentric, DeadbeatPlan};
use crate::error::{Error, Result};
use crate::geometry::{max_pi_set, HPolytope};
use crate::horizon::{add_slab_rows, add_stage_sets, rollout, trajectory_builder, trajectory_value, Layout, TerminalRows};
use crate::plant::{lqr, ProblemSpec};
use crate::qpsolve::{QpSettings, QpStatus, QuadraticProgram};

/// Default cap on the number of inequality rows of the online problem.
pub const DEFAULT_ROW_CAP: usize = 1_000_000;

/// Weight of the quadratic tie-breaker on the online deadbeat inputs.
pub const W_REGULARIZER: f64 = 1e-8;

/// Violation tolerance used when checking candidate sequences.
pub const CANDIDATE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalKind {
    Origin,
    PiSet,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerminalCondition {
    Origin,
    PiSet {
        set: HPolytope,
        cost_p: DMatrix<f64>,
        /// LQR gain used as terminal controller.
        gain: DMatrix<f64>,
    },
}

impl TerminalCondition {
    pub fn kind(&self) -> TerminalKind {
        match self {
            TerminalCondition::Origin => TerminalKind::Origin,
            TerminalCondition::PiSet { .. } => TerminalKind::PiSet,
        }
    }

    fn rows(&self) -> TerminalRows<'_> {
        match self {
            TerminalCondition::Origin => TerminalRows::Origin,
            TerminalCondition::PiSet { set, cost_p, .. } => TerminalRows::Set { set, cost_p },
        }
    }

    fn cost_p(&self) -> Option<&DMatrix<f64>> {
        match self {
            TerminalCondition::Origin => None,
            TerminalCondition::PiSet { cost_p, .. } => Some(cost_p),
        }
    }

    /// Input appended after the horizon by the terminal controller.
    fn terminal_input(&self, x_n: &DVector<f64>, m: usize) -> DVector<f64> {
        match self {
            TerminalCondition::Origin => DVector::zeros(m),
            TerminalCondition::PiSet { gain, .. } => gain * x_n,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            TerminalCondition::Origin => json!({ "kind": "origin" }),
            TerminalCondition::PiSet { set, cost_p, gain } => json!({
                "kind": "pi-set",
                "set": set,
                "cost_p": crate::linalg::mat_to_rows(cost_p),
                "gain": crate::linalg::mat_to_rows(gain),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Online,
    Offline,
}

/// Closed-form online row count for box-shaped `X` and `U` (two-sided rows):
/// `(p + … + p^{M−1} + (N−M) p^M)(n+m) + m + n p^M`.
pub fn closed_form_row_count(p: usize, m_h: usize, big_n: usize, n: usize, m: usize) -> u128 {
    let p = p as u128;
    let geo: u128 = (1..m_h as u32).map(|e| p.pow(e)).sum();
    let pm = p.pow(m_h as u32);
    (geo + (big_n - m_h) as u128 * pm) * (n + m) as u128 + m as u128 + n as u128 * pm
}

/// Number of inequality rows `build_online` produces: `su` rows per input
/// tuple and `sx` per state tuple, with tuple lengths `min(k, M)`.
pub fn online_row_count(p: usize, m_h: usize, big_n: usize, su: usize, sx: usize) -> u128 {
    let p = p as u128;
    let inputs: u128 = (0..big_n).map(|k| p.pow(k.min(m_h) as u32)).sum();
    let states: u128 = (1..=big_n).map(|k| p.pow(k.min(m_h) as u32)).sum();
    inputs * su as u128 + states * sx as u128
}

struct OnlineLayout {
    base: Layout,
    p: usize,
    m_h: usize,
}

impl OnlineLayout {
    fn new(spec: &ProblemSpec) -> Self {
        OnlineLayout {
            base: Layout {
                n: spec.n(),
                m: spec.m(),
                horizon: spec.horizon_n,
                free_initial: false,
            },
            p: spec.p(),
            m_h: spec.deadbeat_m,
        }
    }

    fn w(&self, i: usize, j: usize) -> usize {
        self.base.base_vars() + (i * self.m_h + j) * self.base.m
    }

    /// `z_j^(i)` for `j = 1..=M`
    fn z(&self, i: usize, j: usize) -> usize {
        self.base.base_vars() + self.p * self.m_h * self.base.m + (i * self.m_h + j - 1) * self.base.n
    }

    fn extra(&self) -> usize {
        self.p * self.m_h * (self.base.m + self.base.n)
    }

    fn deadbeat_inputs(&self, primal: &DVector<f64>) -> Vec<Vec<DVector<f64>>> {
        (0..self.p)
            .map(|i| (0..self.m_h).map(|j| primal.rows(self.w(i, j), self.base.m).into_owned()).collect())
            .collect()
    }
}

/// Calls `f` with every index tuple in `{0..p}^len`, lexicographically.
fn for_each_tuple(p: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; len];
    loop {
        f(&idx);
        let mut pos = len;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < p {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Online DRMPC problem at `x0` with the default row cap.
pub fn build_online(spec: &ProblemSpec, x0: &DVector<f64>) -> Result<QuadraticProgram> {
    build_online_capped(spec, x0, DEFAULT_ROW_CAP)
}

/// Online DRMPC problem: nominal trajectory, per-vertex deadbeat variables
/// and the corner-case rows for every vertex-index tuple.
pub fn build_online_capped(spec: &ProblemSpec, x0: &DVector<f64>, row_cap: usize) -> Result<QuadraticProgram> {
    let lay = OnlineLayout::new(spec);
    let (n, m, m_h, p) = (spec.n(), spec.m(), spec.deadbeat_m, spec.p());
    let us = spec.u_set.to_slabs();
    let xs = spec.x_set.to_slabs();
    let rows = online_row_count(p, m_h, spec.horizon_n, us.rows.nrows(), xs.rows.nrows());
    if rows > row_cap as u128 {
        return Err(Error::InvalidInput(format!(
            "online problem would have {rows} inequality rows, above the cap of {row_cap}"
        )));
    }
    let mut qp = trajectory_builder(&spec.system, &spec.cost, lay.base, lay.extra(), x0, &TerminalRows::Origin)?;
    let reg = DMatrix::identity(m, m) * (2.0 * W_REGULARIZER);
    let (a, b) = (spec.system.a(), spec.system.b());
    for (i, d) in spec.d_set.vertices().iter().enumerate() {
        let ad = a * d;
        for j in 0..m_h {
            qp.add_hessian_block(lay.w(i, j), &reg);
            for r in 0..n {
                let mut row = vec![(lay.z(i, j + 1) + r, 1.0)];
                if j >= 1 {
                    row.extend((0..n).map(|c| (lay.z(i, j) + c, -a[(r, c)])));
                }
                row.extend((0..m).map(|c| (lay.w(i, j) + c, -b[(r, c)])));
                qp.add_eq(row, if j == 0 { ad[r] } else { 0.0 });
            }
        }
        for r in 0..n {
            qp.add_eq(vec![(lay.z(i, m_h) + r, 1.0)], 0.0);
        }
    }
    let zero_m = DVector::zeros(m);
    for k in 0..spec.horizon_n {
        for_each_tuple(p, k.min(m_h), |t| {
            let mut terms = vec![lay.base.u(k)];
            terms.extend(t.iter().enumerate().map(|(l, &i)| lay.w(i, l)));
            add_slab_rows(&mut qp, &us, &terms, &zero_m);
        });
    }
    for s in 1..=spec.horizon_n {
        for_each_tuple(p, s.min(m_h), |t| {
            let mut terms = vec![lay.base.x(s)];
            terms.extend(t.iter().enumerate().skip(1).map(|(l, &i)| lay.z(i, l)));
            add_slab_rows(&mut qp, &xs, &terms, &spec.d_set.vertices()[t[0]]);
        });
    }
    qp.build()
}

/// Tightened input and state sets for steps `0..=M` (index `k` means `k`
/// hulls subtracted).
#[derive(Debug, Clone, PartialEq)]
pub struct Tightening {
    pub inputs: Vec<HPolytope>,
    pub states: Vec<HPolytope>,
}

impl Tightening {
    pub fn compute(spec: &ProblemSpec, plan: &DeadbeatPlan) -> Result<Self> {
        check_plan(spec, plan)?;
        Ok(Tightening {
            inputs: accumulated_tightening(&spec.u_set, plan.input_hulls(), "input")?,
            states: accumulated_tightening(&spec.x_set, plan.state_hulls(), "state")?,
        })
    }

    /// Input set at prediction step `k`.
    pub fn input_at(&self, k: usize) -> &HPolytope {
        &self.inputs[k.min(self.inputs.len() - 1)]
    }

    /// State set for `x_{k|0}`.
    pub fn state_at(&self, k: usize) -> &HPolytope {
        &self.states[k.min(self.states.len() - 1)]
    }

    pub fn most_tightened(&self) -> (&HPolytope, &HPolytope) {
        (self.inputs.last().unwrap(), self.states.last().unwrap())
    }
}

fn check_plan(spec: &ProblemSpec, plan: &DeadbeatPlan) -> Result<()> {
    if plan.m_horizon() != spec.deadbeat_m || plan.disturbance() != &spec.d_set {
        return Err(Error::InvalidInput(
            "deadbeat plan was computed for a different disturbance set or deadbeat horizon".into(),
        ));
    }
    Ok(())
}

/// LQR terminal controller, Riccati cost and the maximal PI set of the LQR
/// loop inside the `M`-step tightened constraints.
pub fn terminal_ingredients(spec: &ProblemSpec, plan: &DeadbeatPlan) -> Result<TerminalCondition> {
    let t = Tightening::compute(spec, plan)?;
    let (u_t, x_t) = t.most_tightened();
    pi_terminal(spec, u_t, x_t)
}

pub(crate) fn pi_terminal(spec: &ProblemSpec, u_t: &HPolytope, x_t: &HPolytope) -> Result<TerminalCondition> {
    let lq = lqr(&spec.system, &spec.cost)?;
    let ak = lq.closed_loop(&spec.system);
    let admissible = x_t.intersect(&u_t.preimage(&lq.gain)?)?;
    let set = max_pi_set(&ak, &admissible, 1000)?;
    // invariance: every facet of the image stays within the set
    for r in 0..set.num_facets() {
        let dir = (set.normals().row(r) * &ak).transpose();
        if let Some(v) = set.support_lp(&dir)? {
            if v > set.offsets()[r] + 1e-7 {
                return Err(Error::SynthesisInfeasible("terminal set failed the invariance check".into()));
            }
        }
    }
    Ok(TerminalCondition::PiSet {
        set,
        cost_p: lq.riccati_p,
        gain: lq.gain,
    })
}

fn offline_qp(spec: &ProblemSpec, t: &Tightening, terminal: &TerminalCondition, x0: &DVector<f64>) -> Result<QuadraticProgram> {
    let layout = Layout {
        n: spec.n(),
        m: spec.m(),
        horizon: spec.horizon_n,
        free_initial: false,
    };
    let mut qp = trajectory_builder(&spec.system, &spec.cost, layout, 0, x0, &terminal.rows())?;
    let u_sets: Vec<HPolytope> = (0..spec.horizon_n).map(|k| t.input_at(k).clone()).collect();
    let x_sets: Vec<HPolytope> = (1..=spec.horizon_n).map(|k| t.state_at(k).clone()).collect();
    add_stage_sets(&mut qp, layout, &u_sets, &x_sets);
    qp.build()
}

/// Offline DRMPC problem at `x0` from a precomputed plan.
pub fn build_offline(
    spec: &ProblemSpec,
    plan: &DeadbeatPlan,
    terminal: &TerminalCondition,
    x0: &DVector<f64>,
) -> Result<QuadraticProgram> {
    offline_qp(spec, &Tightening::compute(spec, plan)?, terminal, x0)
}

/// Receding-horizon DRMPC controller (immutable).
#[derive(Debug, Clone)]
pub struct DrmpcController {
    spec: ProblemSpec,
    mode: Mode,
    plan: Option<DeadbeatPlan>,
    terminal: TerminalCondition,
    tightening: Option<Tightening>,
    settings: QpSettings,
    row_cap: usize,
}

impl DrmpcController {
    /// Online DRMPC; the terminal set is the origin.
    pub fn online(spec: &ProblemSpec) -> Result<Self> {
        let count = online_row_count(
            spec.p(),
            spec.deadbeat_m,
            spec.horizon_n,
            spec.u_set.to_slabs().rows.nrows(),
            spec.x_set.to_slabs().rows.nrows(),
        );
        if count > DEFAULT_ROW_CAP as u128 {
            return Err(Error::InvalidInput(format!(
                "online problem would have {count} inequality rows, above the cap of {DEFAULT_ROW_CAP}"
            )));
        }
        Ok(DrmpcController {
            spec: spec.clone(),
            mode: Mode::Online,
            plan: None,
            terminal: TerminalCondition::Origin,
            tightening: None,
            settings: QpSettings::default(),
            row_cap: DEFAULT_ROW_CAP,
        })
    }

    /// Offline DRMPC: computes the plan, the tightening and the requested
    /// terminal condition.
    pub fn offline(spec: &ProblemSpec, terminal: TerminalKind) -> Result<Self> {
        let plan = DeadbeatPlan::compute(spec)?;
        Self::offline_with_plan(spec, plan, terminal)
    }

    pub fn offline_with_plan(spec: &ProblemSpec, plan: DeadbeatPlan, terminal: TerminalKind) -> Result<Self> {
        let tightening = Tightening::compute(spec, &plan)?;
        let terminal = match terminal {
            TerminalKind::Origin => TerminalCondition::Origin,
            TerminalKind::PiSet => {
                let (u_t, x_t) = tightening.most_tightened();
                pi_terminal(spec, u_t, x_t)?
            }
        };
        Ok(DrmpcController {
            spec: spec.clone(),
            mode: Mode::Offline,
            plan: Some(plan),
            terminal,
            tightening: Some(tightening),
            settings: QpSettings::default(),
            row_cap: DEFAULT_ROW_CAP,
        })
    }

    /// Builds either mode from a kind; online only accepts the origin.
    pub fn new(spec: &ProblemSpec, mode: Mode, terminal: TerminalKind) -> Result<Self> {
        match (mode, terminal) {
            (Mode::Online, TerminalKind::Origin) => Self::online(spec),
            (Mode::Online, TerminalKind::PiSet) => Err(Error::InvalidInput(
                "a PI-set terminal condition needs precomputed deadbeat sequences (offline mode)".into(),
            )),
            (Mode::Offline, t) => Self::offline(spec, t),
        }
    }

    pub fn with_settings(mut self, settings: QpSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_row_cap(mut self, cap: usize) -> Self {
        self.row_cap = cap;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn plan(&self) -> Option<&DeadbeatPlan> {
        self.plan.as_ref()
    }

    pub fn terminal(&self) -> &TerminalCondition {
        &self.terminal
    }

    pub fn tightening(&self) -> Option<&Tightening> {
        self.tightening.as_ref()
    }

    fn layout(&self) -> Layout {
        Layout {
            n: self.spec.n(),
            m: self.spec.m(),
            horizon: self.spec.horizon_n,
            free_initial: false,
        }
    }

    /// Deadbeat sequences used by a solution: the stored plan offline, the
    /// optimized `w*` online.
    pub fn solution_plan(&self, primal: &DVector<f64>) -> Result<DeadbeatPlan> {
        match (&self.mode, &self.plan) {
            (Mode::Offline, Some(plan)) => Ok(plan.clone()),
            _ => DeadbeatPlan::from_inputs(&self.spec, OnlineLayout::new(&self.spec).deadbeat_inputs(primal)),
        }
    }

    /// Predicted `(u_0..u_{N-1}, x_0..x_N)` of a primal stack.
    pub fn trajectories(&self, primal: &DVector<f64>, x0: &DVector<f64>) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let lay = self.layout();
        (lay.inputs(primal), lay.states(primal, x0))
    }
}

impl Controller for DrmpcController {
    fn id(&self) -> &'static str {
        match self.mode {
            Mode::Online => "drmpc-online",
            Mode::Offline => "drmpc-offline",
        }
    }

    fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    fn build_qp(&self, x: &DVector<f64>) -> Result<QuadraticProgram> {
        match self.mode {
            Mode::Online => build_online_capped(&self.spec, x, self.row_cap),
            Mode::Offline => offline_qp(&self.spec, self.tightening.as_ref().unwrap(), &self.terminal, x),
        }
    }

    fn decide(&self, x: &DVector<f64>) -> Result<ControlDecision> {
        let qp = self.build_qp(x)?;
        let Some(primal) = solve_checked(&qp, &self.settings, self.id())? else {
            return Ok(ControlDecision::infeasible(self.spec.m()));
        };
        let (inputs, states) = self.trajectories(&primal, x);
        let value = trajectory_value(&self.spec.cost, &inputs, &states, self.terminal.cost_p());
        Ok(ControlDecision {
            input: inputs[0].clone(),
            value,
            status: QpStatus::Optimal,
            full_solution: Some(primal),
        })
    }

    fn export(&self) -> serde_json::Value {
        let mut v = json!({
            "type": self.id(),
            "horizon_n": self.spec.horizon_n,
            "deadbeat_m": self.spec.deadbeat_m,
            "terminal": self.terminal.to_json(),
        });
        if let Some(t) = &self.tightening {
            v["tightened_u"] = json!(t.inputs);
            v["tightened_x"] = json!(t.states);
        }
        if let Some(plan) = &self.plan {
            v["plan"] = serde_json::to_value(plan.to_json()).unwrap_or_default();
        }
        v
    }
}

/// The shifted candidate of the recursive-feasibility argument.
#[derive(Debug, Clone)]
pub struct ShiftCandidate {
    /// `u_{1|1} .. u_{N|1}`
    pub inputs: Vec<DVector<f64>>,
    /// `x_{1|1} .. x_{N+1|1}`
    pub states: Vec<DVector<f64>>,
    /// Largest violation of any row (or equality) of the problem at `x_1`.
    pub max_violation: f64,
    pub feasible: bool,
    /// Value of the candidate under the problem's cost.
    pub value: f64,
}

/// Builds the candidate for the successor state `x_1 = A x0 + B u*_0 + d`:
/// shifted optimal inputs plus the barycentric deadbeat correction for `d`,
/// with the terminal controller's input appended, and evaluates it against
/// every constraint of the problem posed at `x_1` (deadbeat variables kept
/// at their previous values).
pub fn candidate_shift(
    ctrl: &DrmpcController,
    x0: &DVector<f64>,
    decision: &ControlDecision,
    d: &DVector<f64>,
) -> Result<ShiftCandidate> {
    let spec = &ctrl.spec;
    let primal = match (&decision.status, &decision.full_solution) {
        (QpStatus::Optimal, Some(p)) => p,
        _ => return Err(Error::InvalidInput("candidate needs an optimal previous solution".into())),
    };
    let plan = ctrl.solution_plan(primal)?;
    let lambda = barycentric(&spec.d_set, d)?;
    let (u_prev, x_prev) = ctrl.trajectories(primal, x0);
    let big_n = spec.horizon_n;
    let mut inputs = Vec::with_capacity(big_n);
    for k in 1..=big_n {
        let mut u = if k < big_n {
            u_prev[k].clone()
        } else {
            ctrl.terminal.terminal_input(&x_prev[big_n], spec.m())
        };
        if k - 1 < spec.deadbeat_m {
            u += plan.policy_input(&lambda, k - 1)?;
        }
        inputs.push(u);
    }
    let x1 = spec.system.step(x0, &u_prev[0], d);
    let states = rollout(&spec.system, &x1, &inputs);
    let qp = ctrl.build_qp(&x1)?;
    let lay = ctrl.layout();
    let mut z = lay.stack(&inputs, &states, qp.num_vars());
    if ctrl.mode == Mode::Online {
        let base = lay.base_vars();
        let extra = qp.num_vars() - base;
        z.rows_mut(base, extra).copy_from(&primal.rows(base, extra));
    }
    let max_violation = qp.max_violation(&z);
    let value = trajectory_value(&spec.cost, &inputs, &states, ctrl.terminal.cost_p());
    Ok(ShiftCandidate {
        feasible: max_violation <= CANDIDATE_TOL,
        inputs,
        states,
        max_violation,
        value,
    })
}

#[cfg(test)]
mod tests;
