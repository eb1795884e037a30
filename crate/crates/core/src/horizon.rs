//! Shared layout of finite-horizon trajectory QPs.
//!
//! Variables are stacked as `[u_0 .. u_{N-1}, x_1 .. x_N, (x_0), extras]`;
//! `x_0` is a variable only for controllers that optimize the initial
//! nominal state (tube MPC).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{HPolytope, Slabs};
use crate::plant::{LinearSystem, StageCost};
use crate::qpsolve::QpBuilder;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub free_initial: bool,
}

impl Layout {
    pub fn u(&self, k: usize) -> usize {
        k * self.m
    }

    /// Offset of `x_k`; `x_0` only exists with a free initial state.
    pub fn x(&self, k: usize) -> usize {
        debug_assert!(k >= 1 || self.free_initial);
        self.horizon * self.m + (k - 1) * self.n
    }

    pub fn x0(&self) -> usize {
        self.horizon * (self.m + self.n)
    }

    pub fn base_vars(&self) -> usize {
        self.horizon * (self.m + self.n) + if self.free_initial { self.n } else { 0 }
    }

    pub fn inputs(&self, primal: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..self.horizon).map(|k| primal.rows(self.u(k), self.m).into_owned()).collect()
    }

    /// `x_0 .. x_N`, with `x_0` either the given measurement or the variable.
    pub fn states(&self, primal: &DVector<f64>, x0: &DVector<f64>) -> Vec<DVector<f64>> {
        let first = if self.free_initial {
            primal.rows(self.x0(), self.n).into_owned()
        } else {
            x0.clone()
        };
        std::iter::once(first)
            .chain((1..=self.horizon).map(|k| primal.rows(self.x(k), self.n).into_owned()))
            .collect()
    }

    /// Stacks trajectories back into a primal vector (extras left zero).
    pub fn stack(&self, inputs: &[DVector<f64>], states: &[DVector<f64>], total: usize) -> DVector<f64> {
        let mut z = DVector::zeros(total);
        for (k, u) in inputs.iter().enumerate() {
            z.rows_mut(self.u(k), self.m).copy_from(u);
        }
        for k in 1..=self.horizon {
            z.rows_mut(self.x(k), self.n).copy_from(&states[k]);
        }
        if self.free_initial {
            z.rows_mut(self.x0(), self.n).copy_from(&states[0]);
        }
        z
    }
}

pub(crate) enum TerminalRows<'a> {
    /// `x_N = 0`
    Origin,
    /// `x_N ∈ set`, cost `x_Nᵀ P x_N`
    Set { set: &'a HPolytope, cost_p: &'a DMatrix<f64> },
}

/// Adds `lo <= rows · (offset-block) + shift <= hi` for every slab row.
pub(crate) fn add_slab_rows(qp: &mut QpBuilder, slabs: &Slabs, terms: &[usize], shift: &DVector<f64>) {
    let dim = slabs.rows.ncols();
    for r in 0..slabs.rows.nrows() {
        let mut row = Vec::with_capacity(dim * terms.len());
        for &off in terms {
            row.extend((0..dim).map(|c| (off + c, slabs.rows[(r, c)])));
        }
        let s: f64 = (0..dim).map(|c| slabs.rows[(r, c)] * shift[c]).sum();
        qp.add_ineq(row, slabs.lo[r] - s, slabs.hi[r] - s);
    }
}

/// Builder with cost, dynamics and terminal rows; stage constraints are left
/// to the caller. `x0` is the measured state, which pins `x_0` unless the
/// layout has a free initial state.
pub(crate) fn trajectory_builder(
    sys: &LinearSystem,
    cost: &StageCost,
    layout: Layout,
    extra_vars: usize,
    x0: &DVector<f64>,
    terminal: &TerminalRows,
) -> Result<QpBuilder> {
    let (n, m, big_n) = (layout.n, layout.m, layout.horizon);
    if x0.len() != n {
        return Err(Error::dim("initial state", n, x0.len()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite initial state".into()));
    }
    let mut qp = QpBuilder::new(layout.base_vars() + extra_vars);
    let q2 = cost.q() * 2.0;
    let r2 = cost.r() * 2.0;
    for k in 0..big_n {
        qp.add_hessian_block(layout.u(k), &r2);
        if k >= 1 {
            qp.add_hessian_block(layout.x(k), &q2);
        }
    }
    if layout.free_initial {
        qp.add_hessian_block(layout.x0(), &q2);
    }
    let (a, b) = (sys.a(), sys.b());
    let ax0 = a * x0;
    for k in 0..big_n {
        for r in 0..n {
            let mut row = vec![(layout.x(k + 1) + r, 1.0)];
            if k >= 1 {
                row.extend((0..n).map(|c| (layout.x(k) + c, -a[(r, c)])));
            } else if layout.free_initial {
                row.extend((0..n).map(|c| (layout.x0() + c, -a[(r, c)])));
            }
            row.extend((0..m).map(|c| (layout.u(k) + c, -b[(r, c)])));
            let rhs = if k == 0 && !layout.free_initial { ax0[r] } else { 0.0 };
            qp.add_eq(row, rhs);
        }
    }
    match terminal {
        TerminalRows::Origin => {
            for r in 0..n {
                qp.add_eq(vec![(layout.x(big_n) + r, 1.0)], 0.0);
            }
        }
        TerminalRows::Set { set, cost_p } => {
            qp.add_hessian_block(layout.x(big_n), &(*cost_p * 2.0));
            add_slab_rows(&mut qp, &set.to_slabs(), &[layout.x(big_n)], &DVector::zeros(n));
        }
    }
    Ok(qp)
}

/// Adds `u_k ∈ u_sets[k]` and `x_{k+1} ∈ x_sets[k]` for every stage.
pub(crate) fn add_stage_sets(qp: &mut QpBuilder, layout: Layout, u_sets: &[HPolytope], x_sets: &[HPolytope]) {
    let zn = DVector::zeros(layout.n);
    let zm = DVector::zeros(layout.m);
    for (k, set) in u_sets.iter().enumerate() {
        add_slab_rows(qp, &set.to_slabs(), &[layout.u(k)], &zm);
    }
    for (k, set) in x_sets.iter().enumerate() {
        add_slab_rows(qp, &set.to_slabs(), &[layout.x(k + 1)], &zn);
    }
}

/// `Σ_{k<N} ℓ(x_k, u_k) + x_Nᵀ P x_N`
pub(crate) fn trajectory_value(
    cost: &StageCost,
    inputs: &[DVector<f64>],
    states: &[DVector<f64>],
    cost_p: Option<&DMatrix<f64>>,
) -> f64 {
    let stage: f64 = inputs.iter().zip(states).map(|(u, x)| cost.eval(x, u)).sum();
    let last = states.last().expect("nonempty trajectory");
    stage + cost_p.map_or(0.0, |p| last.dot(&(p * last)))
}

/// Forward simulation of the nominal model from `x0`.
pub(crate) fn rollout(sys: &LinearSystem, x0: &DVector<f64>, inputs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(inputs.len() + 1);
    out.push(x0.clone());
    for u in inputs {
        let next = sys.a() * out.last().unwrap() + sys.b() * u;
        out.push(next);
    }
    out
}
