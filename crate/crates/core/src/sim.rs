//! Closed-loop simulation, disturbance generation and empirical stability
//! checks.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::controller::Controller;
use crate::deadbeat::barycentric;
use crate::error::{Error, Result};
use crate::fmt;
use crate::geometry::{BoxSet, Support, VPolytope};
use crate::plant::ProblemSpec;
use crate::qpsolve::QpStatus;

/// Identifier of the random generator, written next to every seed.
pub const RNG_ID: &str = "chacha8";

/// Slack allowed in the nominal decrease `V_{k+1} <= V_k - ℓ(x_k, u_k)`.
pub const DECREASE_TOL: f64 = 1e-6;

/// Norm below which a state counts as converged.
pub const CONVERGENCE_TOL: f64 = 1e-4;

/// Tolerance of the `x ∈ X`, `u ∈ U` compliance check.
pub const COMPLIANCE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    Zero,
    /// Uniform over `D` (exactly uniform for boxes; a flat Dirichlet mix of
    /// the vertices otherwise).
    UniformBox,
    /// A vertex of `D` drawn uniformly.
    RandomVertex,
    /// Replays the given sequence, then zero.
    FixedSequence(Vec<DVector<f64>>),
    /// Uniform before step `T0`, zero from `T0` on.
    VanishAfter(usize),
}

impl PolicyKind {
    /// Parses `zero`, `uniform`, `vertex` or `vanish:T0`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(PolicyKind::Zero),
            "uniform" => Ok(PolicyKind::UniformBox),
            "vertex" => Ok(PolicyKind::RandomVertex),
            _ => match s.strip_prefix("vanish:") {
                Some(t) => t
                    .parse()
                    .map(PolicyKind::VanishAfter)
                    .map_err(|_| Error::InvalidInput(format!("bad vanish step `{t}`"))),
                None => Err(Error::InvalidInput(format!(
                    "unknown policy `{s}` (expected zero, uniform, vertex or vanish:T0)"
                ))),
            },
        }
    }

    pub fn label(&self) -> String {
        match self {
            PolicyKind::Zero => "zero".into(),
            PolicyKind::UniformBox => "uniform".into(),
            PolicyKind::RandomVertex => "vertex".into(),
            PolicyKind::FixedSequence(s) => format!("fixed:{}", s.len()),
            PolicyKind::VanishAfter(t) => format!("vanish:{t}"),
        }
    }
}

/// Seeded disturbance source. `stream` selects an independent ChaCha stream,
/// used to give every Monte-Carlo run its own sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbancePolicy {
    pub kind: PolicyKind,
    pub seed: u64,
    pub stream: u64,
}

impl DisturbancePolicy {
    pub fn new(kind: PolicyKind, seed: u64) -> Self {
        DisturbancePolicy { kind, seed, stream: 0 }
    }

    pub fn zero() -> Self {
        Self::new(PolicyKind::Zero, 0)
    }

    pub fn with_stream(&self, stream: u64) -> Self {
        DisturbancePolicy {
            stream,
            ..self.clone()
        }
    }

    fn generator<'a>(&'a self, d_set: &'a VPolytope) -> Generator<'a> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        Generator {
            policy: self,
            d_set,
            d_box: crate::plant::as_box_vertices(d_set),
            rng,
        }
    }

    /// The first `steps` disturbances this policy emits.
    pub fn sample(&self, d_set: &VPolytope, steps: usize) -> Result<Vec<DVector<f64>>> {
        let mut g = self.generator(d_set);
        (0..steps).map(|k| g.next(k)).collect()
    }
}

struct Generator<'a> {
    policy: &'a DisturbancePolicy,
    d_set: &'a VPolytope,
    d_box: Option<BoxSet>,
    rng: ChaCha8Rng,
}

impl Generator<'_> {
    fn uniform(&mut self) -> DVector<f64> {
        if let Some(b) = &self.d_box {
            let (lo, hi) = (b.lower(), b.upper());
            return DVector::from_fn(lo.len(), |i, _| lo[i] + (hi[i] - lo[i]) * self.rng.random::<f64>());
        }
        let verts = self.d_set.vertices();
        let weights: Vec<f64> = verts.iter().map(|_| -(1.0 - self.rng.random::<f64>()).ln()).collect();
        let total: f64 = weights.iter().sum();
        let mut d = DVector::zeros(self.d_set.dim());
        for (v, w) in verts.iter().zip(&weights) {
            d.axpy(w / total, v, 1.0);
        }
        d
    }

    fn next(&mut self, k: usize) -> Result<DVector<f64>> {
        let n = self.d_set.dim();
        let d = match &self.policy.kind {
            PolicyKind::Zero => DVector::zeros(n),
            PolicyKind::UniformBox => self.uniform(),
            PolicyKind::RandomVertex => {
                let i = self.rng.random_range(0..self.d_set.num_vertices());
                self.d_set.vertices()[i].clone()
            }
            PolicyKind::FixedSequence(seq) => seq.get(k).cloned().unwrap_or_else(|| DVector::zeros(n)),
            PolicyKind::VanishAfter(t0) => {
                if k < *t0 {
                    self.uniform()
                } else {
                    DVector::zeros(n)
                }
            }
        };
        barycentric(self.d_set, &d)
            .map_err(|_| Error::InvalidInput(format!("disturbance at step {k} lies outside D")))?;
        Ok(d)
    }
}

/// One closed-loop run. Per-step vectors (`inputs`, `disturbances`,
/// `stage_costs`) cover the applied steps; `values` and `statuses` cover
/// every attempted solve, so an aborted run has one more of those.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopTrace {
    pub controller_id: String,
    pub input_dim: usize,
    pub policy: DisturbancePolicy,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub disturbances: Vec<DVector<f64>>,
    pub values: Vec<f64>,
    pub stage_costs: Vec<f64>,
    pub statuses: Vec<QpStatus>,
}

impl ClosedLoopTrace {
    /// Applied steps.
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Step at which the run stopped on an infeasible problem.
    pub fn aborted_at(&self) -> Option<usize> {
        self.statuses.iter().position(|s| *s != QpStatus::Optimal)
    }

    pub fn all_optimal(&self) -> bool {
        self.aborted_at().is_none()
    }

    /// Re-simulates `(x_0, inputs, disturbances)` and compares bitwise.
    pub fn is_self_consistent(&self, spec: &ProblemSpec) -> bool {
        let n = self.inputs.len();
        if self.states.len() != n + 1 || self.disturbances.len() != n || self.stage_costs.len() != n {
            return false;
        }
        if self.statuses.len() != self.values.len() || !(n..=n + 1).contains(&self.statuses.len()) {
            return false;
        }
        (0..n).all(|k| spec.system.step(&self.states[k], &self.inputs[k], &self.disturbances[k]) == self.states[k + 1])
    }

    /// Largest violation of `x_k ∈ X` and `u_k ∈ U` over the applied steps.
    pub fn constraint_violation(&self, spec: &ProblemSpec) -> f64 {
        let xs = self.states.iter().map(|x| spec.x_set.violation(x));
        let us = self.inputs.iter().map(|u| spec.u_set.violation(u));
        xs.chain(us).fold(0.0, f64::max)
    }

    /// CSV with header `step,x1..xn,u1..um,d1..dn,V,stage_cost,status`. The
    /// row after the last applied step carries only the state (and, for an
    /// aborted run, the failed solve).
    pub fn to_csv(&self) -> String {
        let n = self.states[0].len();
        let m = self.input_dim;
        let mut head = vec!["step".to_string()];
        head.extend((1..=n).map(|i| format!("x{i}")));
        head.extend((1..=m).map(|i| format!("u{i}")));
        head.extend((1..=n).map(|i| format!("d{i}")));
        head.extend(["V".into(), "stage_cost".into(), "status".into()]);
        let mut out = head.join(",");
        out.push('\n');
        for (k, x) in self.states.iter().enumerate() {
            let mut row = vec![k.to_string(), fmt::floats(x.iter())];
            if k < self.inputs.len() {
                row.push(fmt::floats(self.inputs[k].iter()));
                row.push(fmt::floats(self.disturbances[k].iter()));
            } else {
                row.push(vec![""; m].join(","));
                row.push(vec![""; n].join(","));
            }
            match self.statuses.get(k) {
                Some(s) => {
                    row.push(fmt::float(self.values[k]));
                    row.push(self.stage_costs.get(k).map_or(String::new(), |c| fmt::float(*c)));
                    row.push(s.to_string());
                }
                None => row.extend([String::new(), String::new(), String::new()]),
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Runs `steps` closed-loop steps from `x0`. An infeasible problem ends the
/// run early with its status recorded; solver failures are errors carrying
/// the step index.
pub fn simulate(
    controller: &dyn Controller,
    x0: &DVector<f64>,
    steps: usize,
    policy: &DisturbancePolicy,
) -> Result<ClosedLoopTrace> {
    if steps == 0 {
        return Err(Error::InvalidInput("simulation needs at least one step".into()));
    }
    let spec = controller.spec();
    if x0.len() != spec.n() {
        return Err(Error::dim("initial state", spec.n(), x0.len()));
    }
    let mut gen = policy.generator(&spec.d_set);
    let mut trace = ClosedLoopTrace {
        controller_id: controller.id().to_string(),
        input_dim: spec.m(),
        policy: policy.clone(),
        states: vec![x0.clone()],
        inputs: Vec::with_capacity(steps),
        disturbances: Vec::with_capacity(steps),
        values: Vec::with_capacity(steps),
        stage_costs: Vec::with_capacity(steps),
        statuses: Vec::with_capacity(steps),
    };
    for k in 0..steps {
        let x = trace.states[k].clone();
        let decision = controller.decide(&x).map_err(|e| match e {
            Error::Solver(msg) => Error::Solver(format!("step {k}: {msg}")),
            other => other,
        })?;
        trace.statuses.push(decision.status);
        trace.values.push(decision.value);
        if !decision.is_optimal() {
            log::info!("{}: infeasible at step {k}", controller.id());
            break;
        }
        let d = gen.next(k)?;
        let u = decision.input;
        trace.stage_costs.push(spec.cost.eval(&x, &u));
        trace.states.push(spec.system.step(&x, &u, &d));
        trace.inputs.push(u);
        trace.disturbances.push(d);
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VanishCheck {
    pub t0: usize,
    /// `T0 + 2N`
    pub deadline: usize,
    /// First step from which every state norm stays below the tolerance.
    pub converged_at: Option<usize>,
    pub passed: bool,
}

/// Empirical Lyapunov/ISS summary of a fully feasible trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IssReport {
    /// Steps `k` with `d_k = 0` whose decrease slack
    /// `V_{k+1} - V_k + ℓ(x_k,u_k)` exceeds the tolerance.
    pub decrease_violations: Vec<usize>,
    /// Largest slack over undisturbed steps (`-inf` if there are none).
    pub max_undisturbed_slack: f64,
    /// `e_k = max(0, V_{k+1} - V_k + ℓ(x_k,u_k))` for `k < T-1`.
    pub excess: Vec<f64>,
    /// Pearson correlation of `e_k` with `‖d_k‖`; `None` when either is
    /// constant.
    pub excess_disturbance_correlation: Option<f64>,
    pub max_state_norm: f64,
    pub stays_in_x: bool,
    pub vanish: Option<VanishCheck>,
}

impl IssReport {
    pub fn passed(&self) -> bool {
        self.decrease_violations.is_empty() && self.stays_in_x && self.vanish.as_ref().is_none_or(|v| v.passed)
    }
}

/// Decrease, boundedness and (for vanishing policies) convergence checks.
pub fn iss_report(trace: &ClosedLoopTrace, spec: &ProblemSpec) -> Result<IssReport> {
    if let Some(k) = trace.aborted_at() {
        return Err(Error::RuntimeInfeasible {
            step: k,
            message: "ISS report needs a fully feasible trace".into(),
        });
    }
    let t = trace.len();
    let mut excess = Vec::with_capacity(t.saturating_sub(1));
    let mut violations = Vec::new();
    let mut max_slack = f64::NEG_INFINITY;
    for k in 0..t.saturating_sub(1) {
        let slack = trace.values[k + 1] - trace.values[k] + trace.stage_costs[k];
        excess.push(slack.max(0.0));
        if trace.disturbances[k].iter().all(|&v| v == 0.0) {
            max_slack = max_slack.max(slack);
            if slack > DECREASE_TOL {
                violations.push(k);
            }
        }
    }
    let dnorms: Vec<f64> = trace.disturbances[..excess.len()].iter().map(|d| d.norm()).collect();
    let norms: Vec<f64> = trace.states.iter().map(|x| x.norm()).collect();
    let vanish = match trace.policy.kind {
        PolicyKind::VanishAfter(t0) => {
            let deadline = t0 + 2 * spec.horizon_n;
            let converged_at = (0..norms.len())
                .rev()
                .take_while(|&k| norms[k] <= CONVERGENCE_TOL)
                .last();
            Some(VanishCheck {
                t0,
                deadline,
                converged_at,
                passed: norms.len() > deadline && converged_at.is_some_and(|c| c <= deadline),
            })
        }
        _ => None,
    };
    Ok(IssReport {
        decrease_violations: violations,
        max_undisturbed_slack: max_slack,
        excess_disturbance_correlation: pearson(&excess, &dnorms),
        excess,
        max_state_norm: norms.iter().cloned().fold(0.0, f64::max),
        stays_in_x: trace.states.iter().all(|x| spec.x_set.contains(x, COMPLIANCE_TOL)),
        vanish,
    })
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() < 2 || a.len() != b.len() {
        return None;
    }
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub runs: usize,
    pub steps: usize,
    /// Infeasible solves across all runs (a run stops at its first one).
    pub violations: usize,
    /// `(run, step)` of every infeasible solve, in run order.
    pub failures: Vec<(usize, usize)>,
    /// Largest `x ∈ X` / `u ∈ U` violation seen on applied steps.
    pub max_constraint_violation: f64,
}

/// Runs `runs` closed loops; run `i` starts from `initial[i % len]` and
/// draws disturbances from ChaCha stream `i` of `seed`. Runs execute in
/// parallel and are merged in run order.
pub fn feasibility_monte_carlo(
    controller: &dyn Controller,
    initial: &[DVector<f64>],
    runs: usize,
    steps: usize,
    kind: &PolicyKind,
    seed: u64,
) -> Result<MonteCarloReport> {
    if initial.is_empty() {
        return Err(Error::InvalidInput("no initial states".into()));
    }
    let base = DisturbancePolicy::new(kind.clone(), seed);
    let traces: Vec<Result<ClosedLoopTrace>> = (0..runs)
        .into_par_iter()
        .map(|i| simulate(controller, &initial[i % initial.len()], steps, &base.with_stream(i as u64)))
        .collect();
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, trace) in traces.into_iter().enumerate() {
        let trace = trace?;
        if let Some(k) = trace.aborted_at() {
            failures.push((i, k));
        }
        worst = worst.max(trace.constraint_violation(controller.spec()));
    }
    Ok(MonteCarloReport {
        runs,
        steps,
        violations: failures.len(),
        failures,
        max_constraint_violation: worst,
    })
}
