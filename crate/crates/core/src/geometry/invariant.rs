//! Invariant-set computations for a fixed linear closed loop `x+ = A x (+ d)`.

use nalgebra::{DMatrix, DVector};

use super::polytope::{minkowski_sum, HPolytope, Support, VPolytope, SET_TOL};
use crate::error::{Error, Result};
use crate::linalg::spectral_radius;

fn check_square(a: &DMatrix<f64>, dim: usize) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim("closed-loop matrix columns", a.nrows(), a.ncols()));
    }
    if a.nrows() != dim {
        return Err(Error::dim("closed-loop matrix vs set dimension", dim, a.nrows()));
    }
    Ok(())
}

fn check_stable(a: &DMatrix<f64>) -> Result<()> {
    let rho = spectral_radius(a);
    if !(rho < 1.0) {
        return Err(Error::InvalidInput(format!("closed loop not stable (spectral radius {rho})")));
    }
    Ok(())
}

/// Maximal positively invariant set of `x+ = a_closed x` inside `constraint`.
///
/// Rows `H a^t x <= h` are added for t = 1, 2, ... until every new row is
/// implied by the current set.
pub fn max_pi_set(a_closed: &DMatrix<f64>, constraint: &HPolytope, max_iter: usize) -> Result<HPolytope> {
    max_rpi_impl(a_closed, constraint, None, max_iter)
}

/// Maximal robust positively invariant set of `x+ = a_closed x + d`,
/// `d ∈ dist`, inside `constraint`: the points whose every disturbed
/// trajectory stays in `constraint`.
pub fn max_rpi_set(
    a_closed: &DMatrix<f64>,
    constraint: &HPolytope,
    dist: &dyn Support,
    max_iter: usize,
) -> Result<HPolytope> {
    if dist.dim() != constraint.dim() {
        return Err(Error::dim("disturbance set dimension", constraint.dim(), dist.dim()));
    }
    max_rpi_impl(a_closed, constraint, Some(dist), max_iter)
}

fn max_rpi_impl(
    a_closed: &DMatrix<f64>,
    constraint: &HPolytope,
    dist: Option<&dyn Support>,
    max_iter: usize,
) -> Result<HPolytope> {
    let n = constraint.dim();
    check_square(a_closed, n)?;
    check_stable(a_closed)?;
    if !constraint.contains(&DVector::zeros(n), SET_TOL) {
        return Err(Error::InvalidInput("constraint set does not contain the origin".into()));
    }
    let base = constraint.remove_redundant(SET_TOL)?;
    let h = base.normals().clone();
    let q = h.nrows();
    let mut omega = base.clone();
    // rows H a^t and the accumulated disturbance margins
    let mut ht = h.clone();
    let mut margin = DVector::zeros(q);
    for _ in 0..max_iter {
        if let Some(d) = dist {
            for j in 0..q {
                margin[j] += d.support(&ht.row(j).transpose())?;
            }
        }
        ht = &ht * a_closed;
        let offsets = base.offsets() - &margin;
        if offsets.iter().any(|&b| b < -SET_TOL) {
            return Err(Error::SynthesisInfeasible(
                "robust invariant set is empty (disturbance too large for constraints)".into(),
            ));
        }
        let mut new_rows = Vec::new();
        for j in 0..q {
            let row = ht.row(j).transpose();
            if row.amax() < 1e-14 {
                continue;
            }
            let redundant = match omega.support_lp(&row)? {
                Some(v) => v <= offsets[j] + SET_TOL,
                None => false,
            };
            if !redundant {
                new_rows.push((row, offsets[j]));
            }
        }
        if new_rows.is_empty() {
            return omega.remove_redundant(SET_TOL);
        }
        let mut normals = DMatrix::zeros(new_rows.len(), n);
        let mut offs = DVector::zeros(new_rows.len());
        for (r, (row, b)) in new_rows.into_iter().enumerate() {
            normals.set_row(r, &row.transpose());
            offs[r] = b;
        }
        omega = omega.intersect(&HPolytope::new(normals, offs)?)?;
        if omega.is_empty()? {
            return Err(Error::SynthesisInfeasible("invariant set is empty".into()));
        }
    }
    Err(Error::NonConvergence(format!("invariant-set iteration did not terminate within {max_iter} steps")))
}

/// Outer approximation of the minimal RPI set of `x+ = a_closed x + d`.
///
/// Returns `(1 - α)^{-1} ⊕_{i<s} a_closed^i dist` for the smallest `s` with
/// `a_closed^s dist ⊆ α dist` and `α <= eps / (1 + eps)`; `α` is measured on
/// the facet normals of `dist`.
pub fn mrpi_approx(a_closed: &DMatrix<f64>, dist: &VPolytope, eps: f64) -> Result<VPolytope> {
    let n = dist.dim();
    check_square(a_closed, n)?;
    check_stable(a_closed)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
    }
    if dist.vertices().iter().all(|v| v.amax() == 0.0) {
        return Ok(VPolytope::origin(n));
    }
    let h = dist.to_hpolytope()?;
    if h.offsets().iter().any(|&b| b <= 0.0) {
        return Err(Error::InvalidInput("disturbance set must contain the origin in its interior".into()));
    }
    let target = eps / (1.0 + eps);
    let max_s = 10_000;
    let mut power = DMatrix::identity(n, n);
    let mut sum = VPolytope::origin(n);
    for _ in 0..max_s {
        sum = minkowski_sum(&sum, &dist.linear_map(&power)?)?;
        power = a_closed * &power;
        let mapped = dist.linear_map(&power)?;
        let mut alpha: f64 = 0.0;
        for j in 0..h.num_facets() {
            let dir = h.normals().row(j).transpose();
            alpha = alpha.max(mapped.support(&dir)? / h.offsets()[j]);
        }
        if alpha <= target {
            return Ok(sum.scale(1.0 / (1.0 - alpha)));
        }
    }
    Err(Error::NonConvergence(format!("mRPI approximation needs more than {max_s} terms")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoxSet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box(n: usize) -> HPolytope {
        BoxSet::symmetric(&vec![1.0; n]).unwrap().to_hpolytope().unwrap()
    }

    fn di_closed() -> DMatrix<f64> {
        // double integrator, ts = 0.1, a stabilizing gain
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.005, 0.1]);
        let k = DMatrix::from_row_slice(1, 2, &[-10.0, -4.5]);
        a + b * k
    }

    #[test]
    fn zero_dynamics_keep_constraint() {
        let c = unit_box(2);
        let omega = max_pi_set(&DMatrix::zeros(2, 2), &c, 10).unwrap();
        for (x, y) in [(1.0, 1.0), (-1.0, 0.5), (1.0001, 0.0)] {
            let p = DVector::from_vec(vec![x, y]);
            assert_eq!(omega.contains(&p, 1e-9), c.contains(&p, 1e-9));
        }
    }

    #[test]
    fn contraction_keeps_unit_box() {
        let omega = max_pi_set(&(DMatrix::identity(2, 2) * 0.5), &unit_box(2), 10).unwrap();
        assert_eq!(omega.num_facets(), 4);
        let bx = omega.as_box().unwrap();
        assert!((bx.upper() - DVector::from_element(2, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn unstable_loop_is_rejected() {
        assert!(max_pi_set(&(DMatrix::identity(2, 2) * 1.1), &unit_box(2), 10).is_err());
    }

    #[test]
    fn pi_set_is_invariant_by_sampling() {
        let ak = di_closed();
        let c = BoxSet::symmetric(&[5.0, 2.0]).unwrap().to_hpolytope().unwrap();
        let omega = max_pi_set(&ak, &c, 200).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut hits = 0;
        while hits < 10_000 {
            let x = DVector::from_vec(vec![rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0)]);
            if !omega.contains(&x, 0.0) {
                continue;
            }
            hits += 1;
            assert!(omega.contains(&(&ak * &x), 1e-9));
            assert!(c.contains(&x, 1e-9));
        }
    }

    #[test]
    fn rpi_set_absorbs_disturbance() {
        let ak = di_closed();
        let c = BoxSet::symmetric(&[5.0, 2.0]).unwrap().to_hpolytope().unwrap();
        let d = BoxSet::symmetric(&[0.01, 0.01]).unwrap();
        let omega = max_rpi_set(&ak, &c, &d, 500).unwrap();
        let dv = d.to_vpolytope();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut hits = 0;
        while hits < 2_000 {
            let x = DVector::from_vec(vec![rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0)]);
            if !omega.contains(&x, 0.0) {
                continue;
            }
            hits += 1;
            for w in dv.vertices() {
                assert!(omega.contains(&(&ak * &x + w), 1e-9));
            }
        }
    }

    #[test]
    fn mrpi_trivial_cases() {
        let d = BoxSet::symmetric(&[0.15, 0.15]).unwrap().to_vpolytope();
        let f = mrpi_approx(&DMatrix::zeros(2, 2), &d, 1e-3).unwrap();
        for dir in [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 2.0]] {
            let dir = DVector::from_row_slice(&dir);
            assert!((f.support(&dir).unwrap() - d.support(&dir).unwrap()).abs() < 1e-12);
        }
        let z = mrpi_approx(&di_closed(), &VPolytope::origin(2), 1e-3).unwrap();
        assert!(z.is_origin_vertex_present() && z.num_vertices() == 1);
    }

    #[test]
    fn mrpi_satisfies_rpi_support_inequality() {
        let ak = di_closed();
        let d = BoxSet::symmetric(&[0.15, 0.15]).unwrap().to_vpolytope();
        let eps = 1e-3;
        let f = mrpi_approx(&ak, &d, eps).unwrap();
        let image = minkowski_sum(&f.linear_map(&ak).unwrap(), &d).unwrap();
        for k in 0..64 {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
            let dir = DVector::from_vec(vec![th.cos(), th.sin()]);
            assert!(image.support(&dir).unwrap() <= (1.0 + eps) * f.support(&dir).unwrap() + 1e-12);
        }
    }
}
