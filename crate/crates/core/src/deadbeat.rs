//! Per-vertex deadbeat sequences, barycentric disturbance feedback and the
//! hulls used for offline tightening.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::float;
use crate::geometry::{planar_hull, BoxSet, HPolytope, Support, VPolytope, SET_TOL};
use crate::plant::{as_box_vertices, ProblemSpec};
use crate::qpsolve::{self, QpBuilder, QpSettings, QpStatus};

/// Deadbeat input and state sequences for every disturbance vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct DeadbeatPlan {
    m_horizon: usize,
    disturbance: VPolytope,
    /// `[vertex][step]`, steps `0..M`
    inputs: Vec<Vec<DVector<f64>>>,
    /// `[vertex][step]`, steps `0..=M`
    states: Vec<Vec<DVector<f64>>>,
    input_hulls: Vec<VPolytope>,
    state_hulls: Vec<VPolytope>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarycentricWeights {
    pub lambdas: DVector<f64>,
}

/// Solves the vertex problem: min Σ ℓ(z_j, w_j) subject to the dynamics from
/// `z_0 = d`, `z_M = 0`, `w_j ∈ U`, `z_j ∈ X`.
fn vertex_sequence(spec: &ProblemSpec, d: &DVector<f64>, vertex: usize) -> Result<Vec<DVector<f64>>> {
    let (n, m, mh) = (spec.n(), spec.m(), spec.deadbeat_m);
    let a = spec.system.a();
    let b = spec.system.b();
    let w_at = |j: usize| j * m;
    let z_at = |j: usize| mh * m + (j - 1) * n;
    let mut qp = QpBuilder::new(mh * (m + n));
    for j in 0..mh {
        qp.add_hessian_block(w_at(j), &(spec.cost.r() * 2.0));
        if j >= 1 {
            qp.add_hessian_block(z_at(j), &(spec.cost.q() * 2.0));
        }
    }
    // z_{j+1} - A z_j - B w_j = 0
    let ad = a * d;
    for j in 0..mh {
        for r in 0..n {
            let mut row = vec![(z_at(j + 1) + r, 1.0)];
            if j >= 1 {
                row.extend((0..n).map(|c| (z_at(j) + c, -a[(r, c)])));
            }
            row.extend((0..m).map(|c| (w_at(j) + c, -b[(r, c)])));
            qp.add_eq(row, if j == 0 { ad[r] } else { 0.0 });
        }
    }
    for r in 0..n {
        qp.add_eq(vec![(z_at(mh) + r, 1.0)], 0.0);
    }
    let us = spec.u_set.to_slabs();
    let xs = spec.x_set.to_slabs();
    for j in 0..mh {
        for r in 0..us.rows.nrows() {
            qp.add_ineq((0..m).map(|c| (w_at(j) + c, us.rows[(r, c)])).collect(), us.lo[r], us.hi[r]);
        }
        if j >= 1 {
            for r in 0..xs.rows.nrows() {
                qp.add_ineq((0..n).map(|c| (z_at(j) + c, xs.rows[(r, c)])).collect(), xs.lo[r], xs.hi[r]);
            }
        }
    }
    let qp = qp.build()?;
    let sol = qpsolve::solve_qp(&qp, &QpSettings::default())?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::PrimalInfeasible => {
            return Err(Error::SynthesisInfeasible(format!(
                "deadbeat problem for disturbance vertex {vertex} ({}) has no solution within {mh} steps under the input and state constraints",
                crate::fmt::floats(d.iter())
            )))
        }
        s => return Err(Error::Solver(format!("deadbeat problem for vertex {vertex}: solver status {s}"))),
    }
    Ok((0..mh).map(|j| sol.primal.rows(w_at(j), m).into_owned()).collect())
}

impl DeadbeatPlan {
    /// Solves one deadbeat problem per disturbance vertex (in parallel) and
    /// assembles the hulls, each with the origin as an extra vertex.
    pub fn compute(spec: &ProblemSpec) -> Result<Self> {
        let inputs: Vec<Vec<DVector<f64>>> = spec
            .d_set
            .vertices()
            .par_iter()
            .enumerate()
            .map(|(i, d)| vertex_sequence(spec, d, i))
            .collect::<Result<_>>()?;
        Self::from_inputs(spec, inputs)
    }

    /// Builds a plan from given input sequences; states are obtained by
    /// forward simulation.
    pub fn from_inputs(spec: &ProblemSpec, inputs: Vec<Vec<DVector<f64>>>) -> Result<Self> {
        let mh = spec.deadbeat_m;
        if inputs.len() != spec.p() {
            return Err(Error::dim("plan vertex count", spec.p(), inputs.len()));
        }
        let mut states = Vec::with_capacity(inputs.len());
        for (i, (d, ws)) in spec.d_set.vertices().iter().zip(&inputs).enumerate() {
            if ws.len() != mh {
                return Err(Error::dim(format!("plan vertex {i} length"), mh, ws.len()));
            }
            let mut zs = vec![d.clone()];
            for w in ws {
                if w.len() != spec.m() {
                    return Err(Error::dim(format!("plan vertex {i} input"), spec.m(), w.len()));
                }
                let z = spec.system.a() * zs.last().unwrap() + spec.system.b() * w;
                zs.push(z);
            }
            states.push(zs);
        }
        let origin_m = DVector::zeros(spec.m());
        let origin_n = DVector::zeros(spec.n());
        let mut input_hulls = Vec::with_capacity(mh);
        let mut state_hulls = Vec::with_capacity(mh);
        for j in 0..mh {
            let mut wv: Vec<DVector<f64>> = inputs.iter().map(|s| s[j].clone()).collect();
            wv.push(origin_m.clone());
            input_hulls.push(VPolytope::new(wv)?);
            let mut zv: Vec<DVector<f64>> = states.iter().map(|s| s[j].clone()).collect();
            zv.push(origin_n.clone());
            state_hulls.push(VPolytope::new(zv)?);
        }
        Ok(DeadbeatPlan {
            m_horizon: mh,
            disturbance: spec.d_set.clone(),
            inputs,
            states,
            input_hulls,
            state_hulls,
        })
    }

    pub fn m_horizon(&self) -> usize {
        self.m_horizon
    }

    pub fn num_vertices(&self) -> usize {
        self.inputs.len()
    }

    pub fn disturbance(&self) -> &VPolytope {
        &self.disturbance
    }

    pub fn input(&self, vertex: usize, step: usize) -> &DVector<f64> {
        &self.inputs[vertex][step]
    }

    pub fn state(&self, vertex: usize, step: usize) -> &DVector<f64> {
        &self.states[vertex][step]
    }

    pub fn inputs(&self) -> &[Vec<DVector<f64>>] {
        &self.inputs
    }

    pub fn states(&self) -> &[Vec<DVector<f64>>] {
        &self.states
    }

    /// `W_0 .. W_{M-1}`
    pub fn input_hulls(&self) -> &[VPolytope] {
        &self.input_hulls
    }

    /// `Z_0 .. Z_{M-1}`
    pub fn state_hulls(&self) -> &[VPolytope] {
        &self.state_hulls
    }

    /// Largest `‖z_M‖∞` over the vertices.
    pub fn terminal_residual(&self) -> f64 {
        self.states
            .iter()
            .map(|s| s[self.m_horizon].amax())
            .fold(0.0, f64::max)
    }

    pub fn barycentric(&self, d: &DVector<f64>) -> Result<BarycentricWeights> {
        barycentric(&self.disturbance, d)
    }

    /// `Σ_i λ_i w_j^(i)`
    pub fn policy_input(&self, weights: &BarycentricWeights, j: usize) -> Result<DVector<f64>> {
        if j >= self.m_horizon {
            return Err(Error::InvalidInput(format!("input step {j} outside 0..{}", self.m_horizon)));
        }
        self.check_weights(weights)?;
        let mut out = DVector::zeros(self.inputs[0][0].len());
        for (i, &l) in weights.lambdas.iter().enumerate() {
            if l != 0.0 {
                out.axpy(l, &self.inputs[i][j], 1.0);
            }
        }
        Ok(out)
    }

    /// `Σ_i λ_i z_j^(i)`
    pub fn policy_state(&self, weights: &BarycentricWeights, j: usize) -> Result<DVector<f64>> {
        if j > self.m_horizon {
            return Err(Error::InvalidInput(format!("state step {j} outside 0..={}", self.m_horizon)));
        }
        self.check_weights(weights)?;
        let mut out = DVector::zeros(self.states[0][0].len());
        for (i, &l) in weights.lambdas.iter().enumerate() {
            if l != 0.0 {
                out.axpy(l, &self.states[i][j], 1.0);
            }
        }
        Ok(out)
    }

    fn check_weights(&self, w: &BarycentricWeights) -> Result<()> {
        if w.lambdas.len() != self.num_vertices() {
            return Err(Error::dim("barycentric weights", self.num_vertices(), w.lambdas.len()));
        }
        Ok(())
    }

    /// `u_k = base_k + Σ_{j=0}^{min(k-1, M-1)} policy_input(λ(d_{k-j-1}), j)`;
    /// disturbances beyond the history are treated as absent.
    pub fn superpose(&self, history: &[DVector<f64>], base: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        if history.len() > base.len() {
            return Err(Error::InvalidInput(format!(
                "disturbance history ({}) longer than the input sequence ({})",
                history.len(),
                base.len()
            )));
        }
        let weights: Vec<BarycentricWeights> = history.iter().map(|d| self.barycentric(d)).collect::<Result<_>>()?;
        let mut out = base.to_vec();
        for (k, u) in out.iter_mut().enumerate() {
            if k == 0 {
                continue;
            }
            for j in 0..=(k - 1).min(self.m_horizon - 1) {
                let t = k - j - 1;
                if t < weights.len() {
                    *u += self.policy_input(&weights[t], j)?;
                }
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> PlanJson {
        let conv = |s: &Vec<Vec<DVector<f64>>>| s.iter().map(|v| v.iter().map(|x| x.iter().copied().collect()).collect()).collect();
        PlanJson {
            m: self.m_horizon,
            inputs: conv(&self.inputs),
            states: conv(&self.states),
        }
    }

    /// Rebuilds a plan from its JSON form, checking it against `spec`.
    pub fn from_json(spec: &ProblemSpec, json: &PlanJson) -> Result<Self> {
        if json.m != spec.deadbeat_m {
            return Err(Error::InvalidInput(format!("plan M = {} but spec M = {}", json.m, spec.deadbeat_m)));
        }
        let inputs = json
            .inputs
            .iter()
            .map(|v| v.iter().map(|x| DVector::from_column_slice(x)).collect())
            .collect();
        let plan = Self::from_inputs(spec, inputs)?;
        for (i, zs) in json.states.iter().enumerate() {
            for (j, z) in zs.iter().enumerate() {
                let ours = plan.states.get(i).and_then(|s| s.get(j));
                if ours.is_none_or(|o| (o - DVector::from_column_slice(z)).amax() > 1e-9) {
                    return Err(Error::InvalidInput(format!("plan state [{i}][{j}] inconsistent with the dynamics")));
                }
            }
        }
        Ok(plan)
    }

    /// CSV with columns `vertex,step,w1..wm,z1..zn`; the last step of every
    /// vertex has empty input fields.
    pub fn to_csv(&self) -> String {
        let m = self.inputs[0][0].len();
        let n = self.states[0][0].len();
        let mut s = String::from("vertex,step");
        for c in 1..=m {
            let _ = write!(s, ",w{c}");
        }
        for c in 1..=n {
            let _ = write!(s, ",z{c}");
        }
        s.push('\n');
        for i in 0..self.num_vertices() {
            for j in 0..=self.m_horizon {
                let _ = write!(s, "{i},{j}");
                for c in 0..m {
                    s.push(',');
                    if j < self.m_horizon {
                        s.push_str(&float(self.inputs[i][j][c]));
                    }
                }
                for c in 0..n {
                    s.push(',');
                    s.push_str(&float(self.states[i][j][c]));
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Serialized plan: `inputs[vertex][step][component]`, same for `states`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanJson {
    #[serde(rename = "M")]
    pub m: usize,
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub states: Vec<Vec<Vec<f64>>>,
}

/// Convenience wrapper around [`DeadbeatPlan::compute`].
pub fn compute_plan(spec: &ProblemSpec) -> Result<DeadbeatPlan> {
    DeadbeatPlan::compute(spec)
}

/// Barycentric weights of `d` with respect to the vertices of `d_set`.
///
/// Boxes use tensor-product weights. Other sets are triangulated by a fan
/// from the lowest-index hull vertex (1-D and 2-D); in higher dimensions the
/// weights come from a phase-1 LP. Points outside the set by at most 1e-9 are
/// projected back.
pub fn barycentric(d_set: &VPolytope, d: &DVector<f64>) -> Result<BarycentricWeights> {
    let n = d_set.dim();
    if d.len() != n {
        return Err(Error::dim("disturbance", n, d.len()));
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite disturbance".into()));
    }
    let p = d_set.num_vertices();
    if p == 1 {
        if (d - &d_set.vertices()[0]).amax() > SET_TOL {
            return Err(outside(d));
        }
        return Ok(BarycentricWeights {
            lambdas: DVector::from_element(1, 1.0),
        });
    }
    if let Some(bx) = as_box_vertices(d_set) {
        return box_weights(d_set, &bx, d);
    }
    match n {
        1 | 2 => fan_weights(d_set, d),
        _ => lp_weights(d_set, d),
    }
}

fn outside(d: &DVector<f64>) -> Error {
    Error::InvalidInput(format!("disturbance ({}) lies outside D", crate::fmt::floats(d.iter())))
}

fn box_weights(d_set: &VPolytope, bx: &BoxSet, d: &DVector<f64>) -> Result<BarycentricWeights> {
    if !bx.contains(d, SET_TOL) {
        return Err(outside(d));
    }
    let n = d.len();
    let t: Vec<f64> = (0..n)
        .map(|j| {
            let (lo, hi) = (bx.lower()[j], bx.upper()[j]);
            if hi > lo {
                ((d[j] - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.5
            }
        })
        .collect();
    let lambdas = DVector::from_iterator(
        d_set.num_vertices(),
        d_set.vertices().iter().map(|v| {
            (0..n)
                .map(|j| if v[j] == bx.upper()[j] { t[j] } else { 1.0 - t[j] })
                .product::<f64>()
        }),
    );
    Ok(BarycentricWeights { lambdas })
}

fn fan_weights(d_set: &VPolytope, d: &DVector<f64>) -> Result<BarycentricWeights> {
    let verts = d_set.vertices();
    let p = verts.len();
    let index_of = |x: &DVector<f64>| verts.iter().position(|v| v == x).expect("hull vertex from input");
    let mut lambdas = DVector::zeros(p);
    let hull: Vec<usize> = if d_set.dim() == 1 {
        let lo = (0..p).min_by(|&a, &b| verts[a][0].total_cmp(&verts[b][0]).then(a.cmp(&b))).unwrap();
        let hi = (0..p).max_by(|&a, &b| verts[a][0].total_cmp(&verts[b][0]).then(b.cmp(&a))).unwrap();
        if lo == hi { vec![lo] } else { vec![lo, hi] }
    } else {
        planar_hull(verts).iter().map(index_of).collect()
    };
    match hull.len() {
        1 => {
            if (d - &verts[hull[0]]).amax() > SET_TOL {
                return Err(outside(d));
            }
            lambdas[hull[0]] = 1.0;
        }
        2 => {
            let (a, b) = (&verts[hull[0]], &verts[hull[1]]);
            let ab = b - a;
            let t = (d - a).dot(&ab) / ab.norm_squared();
            let proj = a + &ab * t.clamp(0.0, 1.0);
            if (&proj - d).amax() > SET_TOL {
                return Err(outside(d));
            }
            let t = t.clamp(0.0, 1.0);
            lambdas[hull[0]] = 1.0 - t;
            lambdas[hull[1]] = t;
        }
        k => {
            // rotate so that the fan starts at the lowest original index
            let start = (0..k).min_by_key(|&i| hull[i]).unwrap();
            let ring: Vec<usize> = (0..k).map(|i| hull[(start + i) % k]).collect();
            let v0 = &verts[ring[0]];
            let mut best: Option<(usize, [f64; 3], f64)> = None;
            for t in 1..k - 1 {
                let (v1, v2) = (&verts[ring[t]], &verts[ring[t + 1]]);
                let mat = DMatrix::from_columns(&[v1 - v0, v2 - v0]);
                let Some(inv) = mat.try_inverse() else { continue };
                let st = inv * (d - v0);
                let coords = [1.0 - st[0] - st[1], st[0], st[1]];
                let worst = coords.iter().copied().fold(f64::INFINITY, f64::min);
                if worst >= -1e-12 {
                    best = Some((t, coords, worst));
                    break;
                }
                if best.is_none_or(|(_, _, w)| worst > w) {
                    best = Some((t, coords, worst));
                }
            }
            let (t, coords, _) = best.ok_or_else(|| outside(d))?;
            let mut c = coords.map(|x| x.max(0.0));
            let s: f64 = c.iter().sum();
            c.iter_mut().for_each(|x| *x /= s);
            let recon = &verts[ring[0]] * c[0] + &verts[ring[t]] * c[1] + &verts[ring[t + 1]] * c[2];
            if (&recon - d).amax() > SET_TOL {
                return Err(outside(d));
            }
            lambdas[ring[0]] += c[0];
            lambdas[ring[t]] += c[1];
            lambdas[ring[t + 1]] += c[2];
        }
    }
    Ok(BarycentricWeights { lambdas })
}

fn lp_weights(d_set: &VPolytope, d: &DVector<f64>) -> Result<BarycentricWeights> {
    let p = d_set.num_vertices();
    let n = d_set.dim();
    let mut eq = DMatrix::zeros(n + 1, p);
    let mut rhs = DVector::zeros(n + 1);
    for (i, v) in d_set.vertices().iter().enumerate() {
        eq.view_mut((0, i), (n, 1)).copy_from(v);
        eq[(n, i)] = 1.0;
    }
    rhs.rows_mut(0, n).copy_from(d);
    rhs[n] = 1.0;
    let res = qpsolve::feasibility_check(&eq, &rhs, &(-DMatrix::identity(p, p)), &DVector::zeros(p))?;
    if !res.feasible {
        return Err(outside(d));
    }
    let mut l = res.point.expect("phase-1 point").map(|x| x.max(0.0));
    let s = l.sum();
    l /= s;
    Ok(BarycentricWeights { lambdas: l })
}

/// `U ⊖ W_0 ⊖ ... ⊖ W_{k-1}` (or the state analogue) for every
/// `k = 0..=M`, each checked for emptiness.
pub(crate) fn accumulated_tightening(base: &HPolytope, hulls: &[VPolytope], what: &str) -> Result<Vec<HPolytope>> {
    let mut out = vec![base.clone()];
    let mut cur = base.clone();
    for (k, h) in hulls.iter().enumerate() {
        cur = crate::geometry::pontryagin_diff(&cur, h)?;
        if cur.is_empty()? {
            return Err(Error::SynthesisInfeasible(format!(
                "tightened {what} set after {} deadbeat steps is empty (disturbance too large for constraints)",
                k + 1
            )));
        }
        out.push(cur.clone());
    }
    Ok(out)
}
