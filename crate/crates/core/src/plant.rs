//! Problem data: system, constraint and disturbance sets, stage cost, LQR
//! ingredients and the JSON config format.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{BoxSet, HPolytope, PolytopeJson, Support, VPolytope, SET_TOL};
use crate::linalg::{
    all_finite_mat, controllability_matrix, is_symmetric, mat_from_rows, mat_inf_norm, mat_to_rows,
    min_sym_eigenvalue, rank, spectral_radius,
};
use crate::qpsolve;

/// The bundled example configuration (double integrator, ts = 0.1).
pub const BUNDLED_DOUBLE_INTEGRATOR_TS010: &str = include_str!("../../../configs/double_integrator_ts010.json");

/// `x+ = A x + B u + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    ts: Option<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, ts: Option<f64>) -> Result<Self> {
        if a.nrows() == 0 || !a.is_square() {
            return Err(Error::config("system.A", format!("must be square and nonempty, got {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::config(
                "system.B",
                format!("must have {} rows and at least one column, got {}x{}", a.nrows(), b.nrows(), b.ncols()),
            ));
        }
        if !all_finite_mat(&a) {
            return Err(Error::config("system.A", "non-finite entry"));
        }
        if !all_finite_mat(&b) {
            return Err(Error::config("system.B", "non-finite entry"));
        }
        if let Some(t) = ts {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("system.ts", format!("must be positive, got {t}")));
            }
        }
        Ok(LinearSystem { a, b, ts })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn ts(&self) -> Option<f64> {
        self.ts
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + d
    }

    /// Rank of `[B, AB, ..., A^{n-1}B]` with a 1e-10 relative threshold.
    pub fn controllability_rank(&self) -> usize {
        rank(&controllability_matrix(&self.a, &self.b), 1e-10)
    }

    pub fn is_controllable(&self) -> bool {
        self.controllability_rank() == self.n()
    }
}

/// Discrete double integrator `A = [[1, ts], [0, 1]]`, `B = [[ts²/2], [ts]]`.
pub fn double_integrator(ts: f64) -> Result<LinearSystem> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::InvalidInput(format!("sampling time must be positive, got {ts}")));
    }
    LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[1.0, ts, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[ts * ts / 2.0, ts]),
        Some(ts),
    )
}

/// `ℓ(x, u) = xᵀQx + uᵀRu`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCost {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl StageCost {
    /// Requires symmetric positive definite `Q` and `R`.
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        Self::check_spd("cost.Q", &q)?;
        Self::check_spd("cost.R", &r)?;
        Ok(StageCost { q, r })
    }

    /// Skips the definiteness checks (symmetry and PSD still enforced);
    /// used where a zero weight is meaningful, e.g. LQR sanity cases.
    pub fn new_semidefinite(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        for (path, m) in [("cost.Q", &q), ("cost.R", &r)] {
            if !m.is_square() || !all_finite_mat(m) || !is_symmetric(m, 1e-12) {
                return Err(Error::config(path, "must be a finite symmetric matrix"));
            }
            if min_sym_eigenvalue(m) < -1e-12 {
                return Err(Error::config(path, "must be positive semidefinite"));
            }
        }
        Ok(StageCost { q, r })
    }

    fn check_spd(path: &str, m: &DMatrix<f64>) -> Result<()> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::config(path, format!("must be square, got {}x{}", m.nrows(), m.ncols())));
        }
        if !all_finite_mat(m) {
            return Err(Error::config(path, "non-finite entry"));
        }
        if !is_symmetric(m, 1e-12) {
            return Err(Error::config(path, "must be symmetric"));
        }
        let lmin = min_sym_eigenvalue(m);
        if lmin <= 0.0 {
            return Err(Error::config(
                path,
                format!("must be positive definite (smallest eigenvalue {lmin:e}); the ISS lower bound on the stage cost needs it"),
            ));
        }
        Ok(())
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        x.dot(&(&self.q * x)) + u.dot(&(&self.r * u))
    }
}

/// LQR gain (`u = K x`) and Riccati solution.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrIngredients {
    pub gain: DMatrix<f64>,
    pub riccati_p: DMatrix<f64>,
}

impl LqrIngredients {
    pub fn closed_loop(&self, sys: &LinearSystem) -> DMatrix<f64> {
        sys.a() + sys.b() * &self.gain
    }
}

fn riccati_map(sys: &LinearSystem, cost: &StageCost, p: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (a, b) = (sys.a(), sys.b());
    let bt_p = b.transpose() * p;
    let s = cost.r() + &bt_p * b;
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NonConvergence("R + BᵀPB lost positive definiteness".into()))?;
    let k = -chol.solve(&(&bt_p * a));
    // P+ = Q + AᵀPA + AᵀPB K
    let at_p = a.transpose() * p;
    let next = cost.q() + &at_p * a + &at_p * b * &k;
    Ok(((&next + next.transpose()) * 0.5, k))
}

/// Riccati residual `‖P − (Q + AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA)‖∞`.
pub fn riccati_residual(sys: &LinearSystem, cost: &StageCost, p: &DMatrix<f64>) -> Result<f64> {
    let (next, _) = riccati_map(sys, cost, p)?;
    Ok(mat_inf_norm(&(p - next)))
}

/// Infinite-horizon LQR by fixed-point iteration of the Riccati map from
/// `P = Q`; stops when successive iterates differ by at most 1e-12 (scaled by
/// `max(1, ‖P‖)`).
pub fn lqr(sys: &LinearSystem, cost: &StageCost) -> Result<LqrIngredients> {
    if cost.q().nrows() != sys.n() {
        return Err(Error::dim("cost.Q", sys.n(), cost.q().nrows()));
    }
    if cost.r().nrows() != sys.m() {
        return Err(Error::dim("cost.R", sys.m(), cost.r().nrows()));
    }
    let max_iter = 1_000_000;
    let mut p = cost.q().clone();
    for _ in 0..max_iter {
        let (next, _) = riccati_map(sys, cost, &p)?;
        if !all_finite_mat(&next) {
            return Err(Error::NonConvergence("Riccati iteration diverged".into()));
        }
        let diff = mat_inf_norm(&(&next - &p));
        p = next;
        if diff <= 1e-12 * mat_inf_norm(&p).max(1.0) {
            let (_, gain) = riccati_map(sys, cost, &p)?;
            let out = LqrIngredients { gain, riccati_p: p };
            let rho = spectral_radius(&out.closed_loop(sys));
            if !(rho < 1.0) {
                return Err(Error::NonConvergence(format!("LQR closed loop not stable (spectral radius {rho})")));
            }
            return Ok(out);
        }
    }
    Err(Error::NonConvergence(format!("Riccati iteration did not converge in {max_iter} steps")))
}

/// Validated problem definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub system: LinearSystem,
    pub x_set: HPolytope,
    pub u_set: HPolytope,
    pub d_set: VPolytope,
    pub cost: StageCost,
    pub horizon_n: usize,
    pub deadbeat_m: usize,
}

impl ProblemSpec {
    /// Validates every field; errors carry the offending config path.
    pub fn new(
        system: LinearSystem,
        x_set: HPolytope,
        u_set: HPolytope,
        d_set: VPolytope,
        cost: StageCost,
        horizon_n: usize,
        deadbeat_m: usize,
    ) -> Result<Self> {
        let spec = ProblemSpec {
            system,
            x_set,
            u_set,
            d_set,
            cost,
            horizon_n,
            deadbeat_m,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn m(&self) -> usize {
        self.system.m()
    }

    /// Number of disturbance vertices.
    pub fn p(&self) -> usize {
        self.d_set.num_vertices()
    }

    pub fn with_horizon(&self, horizon_n: usize) -> Result<Self> {
        let mut s = self.clone();
        s.horizon_n = horizon_n;
        s.validate()?;
        Ok(s)
    }

    pub fn with_deadbeat(&self, deadbeat_m: usize) -> Result<Self> {
        let mut s = self.clone();
        s.deadbeat_m = deadbeat_m;
        s.validate()?;
        Ok(s)
    }

    pub fn with_disturbance(&self, d_set: VPolytope) -> Result<Self> {
        let mut s = self.clone();
        s.d_set = d_set;
        s.validate()?;
        Ok(s)
    }

    /// Same problem with the double integrator re-discretized at `ts`. Only
    /// defined when the current system is a double integrator with a
    /// recorded sampling time.
    pub fn with_sample_time(&self, ts: f64) -> Result<Self> {
        let current = self
            .system
            .ts()
            .ok_or_else(|| Error::config("system.ts", "sampling time is not recorded"))?;
        let reference = double_integrator(current)?;
        let close = (self.system.a() - reference.a()).amax() <= 1e-12 && (self.system.b() - reference.b()).amax() <= 1e-12;
        if !close {
            return Err(Error::config("system", "sampling-time sweeps need a double-integrator system"));
        }
        let mut s = self.clone();
        s.system = double_integrator(ts)?;
        s.validate()?;
        Ok(s)
    }

    /// The disturbance set as a box when its vertex list is exactly the
    /// corner set of its bounding box.
    pub fn d_box(&self) -> Option<BoxSet> {
        as_box_vertices(&self.d_set)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        let m = self.m();
        if !self.system.is_controllable() {
            return Err(Error::config(
                "system.B",
                format!(
                    "(A, B) is not controllable (controllability rank {} < n = {n}); Assumption 1b requires a controllable pair",
                    self.system.controllability_rank()
                ),
            ));
        }
        if self.x_set.dim() != n {
            return Err(Error::config("X", format!("dimension {} does not match n = {n}", self.x_set.dim())));
        }
        if self.u_set.dim() != m {
            return Err(Error::config("U", format!("dimension {} does not match m = {m}", self.u_set.dim())));
        }
        if self.d_set.dim() != n {
            return Err(Error::config("D", format!("dimension {} does not match n = {n}", self.d_set.dim())));
        }
        if self.cost.q().nrows() != n {
            return Err(Error::config("cost.Q", format!("must be {n}x{n}")));
        }
        if self.cost.r().nrows() != m {
            return Err(Error::config("cost.R", format!("must be {m}x{m}")));
        }
        let origin_n = DVector::zeros(n);
        if !self.x_set.contains(&origin_n, SET_TOL) {
            return Err(Error::config("X", "origin is not in X; Assumption 2 requires 0 ∈ X"));
        }
        if !self.u_set.contains(&DVector::zeros(m), SET_TOL) {
            return Err(Error::config("U", "origin is not in U; Assumption 2 requires 0 ∈ U"));
        }
        if !vpolytope_contains(&self.d_set, &origin_n)? {
            return Err(Error::config("D", "origin is not in D; Assumption 2 requires 0 ∈ D"));
        }
        for (path, set) in [("X", &self.x_set), ("U", &self.u_set)] {
            if set.is_empty()? {
                return Err(Error::config(path, "set is empty"));
            }
        }
        if self.deadbeat_m < n {
            return Err(Error::config(
                "M",
                format!("deadbeat horizon M = {} must be at least n = {n}", self.deadbeat_m),
            ));
        }
        if self.horizon_n < self.deadbeat_m {
            return Err(Error::config(
                "N",
                format!("horizon N = {} must be at least M = {}", self.horizon_n, self.deadbeat_m),
            ));
        }
        Ok(())
    }
}

/// Exact box detection on a vertex list.
pub(crate) fn as_box_vertices(set: &VPolytope) -> Option<BoxSet> {
    let bb = set.bounding_box();
    let corners = bb.to_vpolytope();
    if corners.num_vertices() != set.num_vertices() {
        return None;
    }
    let all = corners.vertices().iter().all(|c| set.vertices().iter().any(|v| v == c));
    all.then_some(bb)
}

/// Point-in-hull test by a phase-1 LP over convex weights.
pub(crate) fn vpolytope_contains(set: &VPolytope, point: &DVector<f64>) -> Result<bool> {
    let p = set.num_vertices();
    let n = set.dim();
    let mut eq = DMatrix::zeros(n + 1, p);
    let mut rhs = DVector::zeros(n + 1);
    for (i, v) in set.vertices().iter().enumerate() {
        eq.view_mut((0, i), (n, 1)).copy_from(v);
        eq[(n, i)] = 1.0;
    }
    rhs.rows_mut(0, n).copy_from(point);
    rhs[n] = 1.0;
    let res = qpsolve::feasibility_check(&eq, &rhs, &(-DMatrix::identity(p, p)), &DVector::zeros(p))?;
    Ok(res.feasible)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SystemConfig {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ts: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CostConfig {
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
}

/// Serialized form of a [`ProblemSpec`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecConfig {
    system: SystemConfig,
    #[serde(rename = "X")]
    x: PolytopeJson,
    #[serde(rename = "U")]
    u: PolytopeJson,
    #[serde(rename = "D")]
    d: PolytopeJson,
    cost: CostConfig,
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "M")]
    m: usize,
}

fn field<'a>(root: &'a Value, path: &str) -> Result<&'a Value> {
    let mut cur = root;
    for key in path.split('.') {
        cur = cur
            .get(key)
            .ok_or_else(|| Error::config(path, "missing field"))?;
    }
    Ok(cur)
}

fn parse_field<T: serde::de::DeserializeOwned>(root: &Value, path: &str) -> Result<T> {
    serde_json::from_value(field(root, path)?.clone()).map_err(|e| Error::config(path, e.to_string()))
}

fn matrix_field(root: &Value, path: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = parse_field(root, path)?;
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::config(path, "matrix must be nonempty"));
    }
    mat_from_rows(&rows).map_err(|e| Error::config(path, e.to_string()))
}

fn hset_field(root: &Value, path: &str) -> Result<HPolytope> {
    let pj: PolytopeJson = parse_field(root, path)?;
    pj.to_hpolytope().map_err(|e| Error::config(path, e.to_string()))
}

/// Parses and validates a JSON config document.
pub fn load_spec(text: &str) -> Result<ProblemSpec> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
    if !root.is_object() {
        return Err(Error::config("<document>", "expected a JSON object"));
    }
    let a = matrix_field(&root, "system.A")?;
    let b = matrix_field(&root, "system.B")?;
    let ts = match root.get("system").and_then(|s| s.get("ts")) {
        None | Some(Value::Null) => None,
        Some(_) => Some(parse_field::<f64>(&root, "system.ts")?),
    };
    let system = LinearSystem::new(a, b, ts)?;
    let x_set = hset_field(&root, "X")?;
    let u_set = hset_field(&root, "U")?;
    let d_json: PolytopeJson = parse_field(&root, "D")?;
    let d_set = d_json.to_vpolytope().map_err(|e| Error::config("D", e.to_string()))?;
    let cost = StageCost::new(matrix_field(&root, "cost.Q")?, matrix_field(&root, "cost.R")?)?;
    let horizon_n: usize = parse_field(&root, "N")?;
    let deadbeat_m: usize = parse_field(&root, "M")?;
    ProblemSpec::new(system, x_set, u_set, d_set, cost, horizon_n, deadbeat_m)
}

pub fn load_spec_file(path: &std::path::Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    load_spec(&text)
}

impl ProblemSpec {
    pub fn to_config(&self) -> SpecConfig {
        SpecConfig {
            system: SystemConfig {
                a: mat_to_rows(self.system.a()),
                b: mat_to_rows(self.system.b()),
                ts: self.system.ts(),
            },
            x: PolytopeJson::from(&self.x_set),
            u: PolytopeJson::from(&self.u_set),
            d: PolytopeJson::from(&self.d_set),
            cost: CostConfig {
                q: mat_to_rows(self.cost.q()),
                r: mat_to_rows(self.cost.r()),
            },
            n: self.horizon_n,
            m: self.deadbeat_m,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_config())?)
    }
}

/// The example of the paper: double integrator, `|x1| <= 5`, `|x2| <= 2`,
/// `|u| <= 2`, `D = [-0.15, 0.15]²`, `Q = I`, `R = 10`.
pub fn example_spec(ts: f64, horizon_n: usize, deadbeat_m: usize) -> Result<ProblemSpec> {
    example_spec_with_disturbance(ts, horizon_n, deadbeat_m, 0.15)
}

pub fn example_spec_with_disturbance(ts: f64, horizon_n: usize, deadbeat_m: usize, d_half: f64) -> Result<ProblemSpec> {
    let system = double_integrator(ts)?;
    ProblemSpec::new(
        system,
        BoxSet::symmetric(&[5.0, 2.0])?.to_hpolytope()?,
        BoxSet::symmetric(&[2.0])?.to_hpolytope()?,
        BoxSet::symmetric(&[d_half, d_half])?.to_vpolytope(),
        StageCost::new(DMatrix::identity(2, 2), DMatrix::from_element(1, 1, 10.0))?,
        horizon_n,
        deadbeat_m,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_integrator_matrices() {
        let s = double_integrator(0.1).unwrap();
        assert_eq!(s.a(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]));
        assert!((s.b()[(0, 0)] - 0.005).abs() < 1e-18 && s.b()[(1, 0)] == 0.1);
        let s = double_integrator(1.0).unwrap();
        assert_eq!(s.b(), &DMatrix::from_row_slice(2, 1, &[0.5, 1.0]));
        assert!(double_integrator(0.0).is_err());
        for ts in [0.01, 0.1, 0.4, 3.0] {
            assert_eq!(double_integrator(ts).unwrap().controllability_rank(), 2);
        }
    }

    #[test]
    fn scalar_lqr_matches_fixed_point() {
        let sys = LinearSystem::new(DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 1.0), None).unwrap();
        let cost = StageCost::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let l = lqr(&sys, &cost).unwrap();
        let p = l.riccati_p[(0, 0)];
        assert!((p - (1.0 + 0.25 * p - 0.25 * p * p / (p + 1.0))).abs() < 1e-12);
        assert!((0.5 + l.gain[(0, 0)]).abs() < 1.0);
    }

    #[test]
    fn zero_cost_gives_zero_gain() {
        let sys = LinearSystem::new(DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 1.0), None).unwrap();
        let cost = StageCost::new_semidefinite(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let l = lqr(&sys, &cost).unwrap();
        assert_eq!(l.riccati_p[(0, 0)], 0.0);
        assert_eq!(l.gain[(0, 0)], 0.0);
    }

    #[test]
    fn example_lqr_residual() {
        let spec = example_spec(0.1, 10, 3).unwrap();
        let l = lqr(&spec.system, &spec.cost).unwrap();
        assert!(riccati_residual(&spec.system, &spec.cost, &l.riccati_p).unwrap() <= 1e-9);
        assert!(spectral_radius(&l.closed_loop(&spec.system)) < 1.0);
    }

    #[test]
    fn bundled_config_loads() {
        let spec = load_spec(BUNDLED_DOUBLE_INTEGRATOR_TS010).unwrap();
        assert_eq!((spec.n(), spec.m(), spec.p()), (2, 1, 4));
        let ex = example_spec(0.1, 10, 3).unwrap();
        assert!((spec.system.b() - ex.system.b()).amax() < 1e-15);
        assert_eq!(spec.system.a(), ex.system.a());
        assert_eq!((&spec.x_set, &spec.u_set, &spec.d_set, &spec.cost), (&ex.x_set, &ex.u_set, &ex.d_set, &ex.cost));
        assert!(spec.d_box().is_some());
    }

    fn edit(f: impl FnOnce(&mut Value)) -> String {
        let mut v: Value = serde_json::from_str(BUNDLED_DOUBLE_INTEGRATOR_TS010).unwrap();
        f(&mut v);
        v.to_string()
    }

    #[test]
    fn zero_b_is_uncontrollable() {
        let text = edit(|v| v["system"]["B"] = serde_json::json!([[0.0], [0.0]]));
        let err = load_spec(&text).unwrap_err().to_string();
        assert!(err.contains("system.B") && err.contains("Assumption 1b"), "{err}");
    }

    #[test]
    fn shifted_disturbance_set_is_rejected() {
        let text = edit(|v| v["D"] = serde_json::json!({"vertices": [[0.1, 0.1], [0.4, 0.1], [0.1, 0.4], [0.4, 0.4]]}));
        let err = load_spec(&text).unwrap_err().to_string();
        assert!(err.contains("`D`") && err.contains("Assumption 2"), "{err}");
    }

    #[test]
    fn deadbeat_horizon_below_n_is_rejected() {
        let text = edit(|v| v["M"] = serde_json::json!(1));
        assert!(load_spec(&text).unwrap_err().to_string().contains("`M`"));
        let text = edit(|v| v["N"] = serde_json::json!(2));
        assert!(load_spec(&text).unwrap_err().to_string().contains("`N`"));
    }

    #[test]
    fn missing_field_names_path() {
        let text = edit(|v| {
            v["cost"].as_object_mut().unwrap().remove("R");
        });
        assert!(load_spec(&text).unwrap_err().to_string().contains("cost.R"));
    }

    #[test]
    fn spec_roundtrip() {
        let spec = load_spec(BUNDLED_DOUBLE_INTEGRATOR_TS010).unwrap();
        let back = load_spec(&spec.to_json().unwrap()).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn sample_time_sweep_rebuilds_the_double_integrator() {
        let spec = load_spec(BUNDLED_DOUBLE_INTEGRATOR_TS010).unwrap();
        let s = spec.with_sample_time(0.4).unwrap();
        assert_eq!(s.system, double_integrator(0.4).unwrap());
        assert_eq!(s.x_set, spec.x_set);
        let other = LinearSystem::new(DMatrix::identity(2, 2), DMatrix::from_row_slice(2, 1, &[0.0, 1.0]), Some(0.1)).unwrap();
        let mut bad = spec.clone();
        bad.system = other;
        assert!(bad.with_sample_time(0.4).is_err());
    }
}
