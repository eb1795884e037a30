//! Primal active-set method for inequality-form QPs
//! `min ½ vᵀH v + cᵀv, A v <= b` with `H` positive semidefinite.
//!
//! Each iteration minimizes the model on the face of the working set with a
//! null-space step. Directions of zero curvature are followed as in the LP
//! method and report unboundedness when nothing blocks them.

use nalgebra::{DMatrix, DVector};

use super::problem::{QpSettings, QpStatus};
use super::reduce::IneqRows;
use super::simplex::{normalized, row_scales};

/// Eigenvalues of the face Hessian below this fraction of the largest are
/// treated as zero curvature.
const CURVATURE_TOL: f64 = 1e-14;

pub(crate) struct Solved {
    pub point: DVector<f64>,
    /// Row multipliers in the units of the input rows.
    pub multipliers: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

/// Orthonormal basis of the null space of the working rows, plus the QR
/// factors of `A_Wᵀ` for multiplier solves.
struct Face {
    z: DMatrix<f64>,
    q_w: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn face(a: &DMatrix<f64>, working: &[usize]) -> Face {
    let n = a.ncols();
    let k = working.len();
    if k == 0 {
        return Face {
            z: DMatrix::identity(n, n),
            q_w: DMatrix::zeros(n, 0),
            r: DMatrix::zeros(0, 0),
        };
    }
    let mut aw = DMatrix::zeros(n, k);
    for (col, &i) in working.iter().enumerate() {
        aw.set_column(col, &a.row(i).transpose());
    }
    // full Q from a square extension so the trailing columns span null(A_W)
    let mut ext = DMatrix::zeros(n, n);
    ext.view_mut((0, 0), (n, k)).copy_from(&aw);
    let qr = ext.qr();
    let q = qr.q();
    let r = qr.r().view((0, 0), (k, k)).into_owned();
    Face {
        z: q.columns(k, n - k).into_owned(),
        q_w: q.columns(0, k).into_owned(),
        r,
    }
}

fn back_substitute(r: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let k = rhs.len();
    let mut out = DVector::zeros(k);
    for i in (0..k).rev() {
        let mut acc = rhs[i];
        for j in i + 1..k {
            acc -= r[(i, j)] * out[j];
        }
        let d = r[(i, i)];
        out[i] = if d.abs() > 1e-300 { acc / d } else { 0.0 };
    }
    out
}

/// Step on the face: the Newton step when the face Hessian is positive
/// definite, otherwise a zero-curvature descent direction if one exists.
/// The flag is true for a Newton step.
fn face_step(h: &DMatrix<f64>, g: &DVector<f64>, z: &DMatrix<f64>) -> (DVector<f64>, bool) {
    if z.ncols() == 0 {
        return (DVector::zeros(h.nrows()), true);
    }
    let zg = z.transpose() * g;
    let hz = z.transpose() * h * z;
    if let Some(chol) = hz.clone().cholesky() {
        let pz = chol.solve(&(-&zg));
        if pz.iter().all(|v| v.is_finite()) {
            return (z * pz, true);
        }
    }
    let eig = hz.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |m, &l| m.max(l.abs()));
    let mut flat = DVector::zeros(zg.len());
    let mut newton = DVector::zeros(zg.len());
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(j);
        let coef = v.dot(&zg);
        if l <= CURVATURE_TOL * lmax.max(1.0) {
            flat.axpy(-coef, &v, 1.0);
        } else {
            newton.axpy(-coef / l, &v, 1.0);
        }
    }
    if flat.amax() > 1e-12 * (1.0 + zg.amax()) {
        (z * flat, false)
    } else {
        (z * newton, true)
    }
}

/// Minimizes the QP over `a_i · v <= b_i + relax * ‖a_i‖` from a point that
/// satisfies the relaxed rows.
pub(crate) fn solve(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    rows: &IneqRows,
    start: &DVector<f64>,
    relax: f64,
    settings: &QpSettings,
) -> Solved {
    let m = rows.len();
    let n = rows.dim();
    let scales = row_scales(&rows.a);
    let (a, mut b) = normalized(rows, &scales);
    b.add_scalar_mut(relax);
    let max_iter = settings.max_iter.min(20 * (m + n) + 100);
    let mut x = start.clone();
    let mut working: Vec<usize> = Vec::new();
    let mut in_working = vec![false; m];
    let mut av = &a * &x;
    let mut at_minimizer = false;
    let finish = |x: DVector<f64>, lam: DVector<f64>, status, iterations| Solved {
        point: x,
        multipliers: DVector::from_iterator(m, (0..m).map(|i| lam[i] / scales[i])),
        status,
        iterations,
    };
    for it in 0..max_iter {
        if it % 32 == 31 {
            av = &a * &x;
        }
        let f = face(&a, &working);
        let g = h * &x + c;
        let (p, newton) = if at_minimizer {
            (DVector::zeros(n), true)
        } else {
            face_step(h, &g, &f.z)
        };
        if p.amax() > 1e-13 * (1.0 + x.amax()) {
            let ap = &a * &p;
            let pn = p.norm();
            let mut best: Option<(usize, f64)> = None;
            for i in 0..m {
                if in_working[i] || ap[i] <= 1e-11 * pn {
                    continue;
                }
                let t = (b[i] - av[i]).max(0.0) / ap[i];
                match best {
                    Some((_, tb)) if t >= tb - 1e-12 * (1.0 + tb.abs()) => {}
                    _ => best = Some((i, t)),
                }
            }
            match best {
                Some((i, t)) if !newton || t < 1.0 => {
                    x.axpy(t, &p, 1.0);
                    av.axpy(t, &ap, 1.0);
                    working.push(i);
                    in_working[i] = true;
                    at_minimizer = false;
                }
                None if !newton => {
                    return finish(x, DVector::zeros(m), QpStatus::DualInfeasible, it);
                }
                _ => {
                    x += &p;
                    av += &ap;
                    at_minimizer = true;
                }
            }
            continue;
        }
        // stationary on the face: A_Wᵀ λ = -g
        let lam_w = back_substitute(&f.r, &(-(f.q_w.transpose() * &g)));
        let lmax = lam_w.amax().max(1.0);
        let mut drop: Option<usize> = None;
        for k in 0..working.len() {
            if lam_w[k] < -1e-11 * lmax && drop.is_none_or(|kk| lam_w[k] < lam_w[kk]) {
                drop = Some(k);
            }
        }
        match drop {
            None => {
                let mut lam = DVector::zeros(m);
                for (k, &i) in working.iter().enumerate() {
                    lam[i] = lam_w[k].max(0.0);
                }
                return finish(x, lam, QpStatus::Optimal, it);
            }
            Some(k) => {
                let i = working.remove(k);
                in_working[i] = false;
                at_minimizer = false;
            }
        }
    }
    finish(x, DVector::zeros(m), QpStatus::MaxIterations, max_iter)
}
